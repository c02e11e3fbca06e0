"""Krylov-chain machinery: Lanczos with full reorthogonalization for states
and operators, tridiagonal chain propagators, RK4 evolution of the chain
wavefunction, and the complexity / entropy observables.

Operator-space vectors are stored as coefficient vectors over the
normalized Pauli-string basis (strings are orthonormal under
(A|B) = Tr[A^dag B] / D), so every inner product is a plain vdot and
orthogonality checks are exact dot products.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import reduce

import numpy as np

from .model import PAULI, ModelParams, build_hamiltonian

OPERATOR_CAP_DEFAULT = 7
RK4_DT_DEFAULT = 1e-3
NORM_DRIFT_TOL = 1e-6
LANCZOS_RELATIVE_TOL = 1e-8
ORTHOGONALITY_HARD_LIMIT = 1e-8


@dataclass
class LanczosData:
    """Tridiagonal coefficients: a (length K), b (length K-1, all > 0)."""

    a: np.ndarray
    b: np.ndarray
    basis: np.ndarray | None = None  # rows are Krylov vectors when stored

    @property
    def krylov_dim(self) -> int:
        return self.a.size


@dataclass
class KrylovPropagator:
    """Generator M of the chain ODE dphi/dt = M phi.

    state kind:    M = -i * tridiag(a; b)        (anti-Hermitian)
    operator kind: M = antisym(b), zero diagonal (real antisymmetric)
    """

    kind: str
    a: np.ndarray
    b: np.ndarray

    @property
    def dim(self) -> int:
        return self.a.size

    def matvec(self, phi: np.ndarray) -> np.ndarray:
        out = np.zeros_like(phi)
        if self.kind == "state":
            out += self.a * phi
            if self.b.size:
                out[1:] += self.b * phi[:-1]
                out[:-1] += self.b * phi[1:]
            out *= -1j
        else:
            if self.b.size:
                out[1:] += self.b * phi[:-1]
                out[:-1] -= self.b * phi[1:]
        return out

    def dense_matrix(self) -> np.ndarray:
        k = self.dim
        m = np.zeros((k, k), dtype=complex)
        idx = np.arange(k - 1)
        if self.kind == "state":
            m[idx, idx] = self.a[:-1]
            m[k - 1, k - 1] = self.a[-1]
            m[idx, idx + 1] = self.b
            m[idx + 1, idx] = self.b
            return -1j * m
        m[idx + 1, idx] = self.b
        m[idx, idx + 1] = -self.b
        return m


@dataclass
class KrylovWavefunction:
    """Chain wavefunction phi_n(t) on a stored time grid; phi(0) = (1,0,...)."""

    times: np.ndarray
    phi: np.ndarray  # shape (n_times, K)

    def norms(self) -> np.ndarray:
        return np.sum(np.abs(self.phi) ** 2, axis=1)


@dataclass
class KrylovObservables:
    """Mean chain position C_K(t) and Shannon entropy S_K(t)."""

    times: np.ndarray
    c_k: np.ndarray
    s_k: np.ndarray


@dataclass
class PipelineResult:
    lanczos: LanczosData
    wavefunction: KrylovWavefunction
    observables: KrylovObservables


def _lanczos(matvec, seed: np.ndarray, cap: int, tol: float, store_basis: bool):
    """Lanczos with two-pass full reorthogonalization each iteration.

    Stops when the residual norm b_n falls to tol or cap vectors exist.
    """
    dim = seed.size
    cap = min(cap, dim)
    norm = np.linalg.norm(seed)
    if abs(norm - 1.0) > 1e-12:
        warnings.warn(f"seed norm {norm:.6g} != 1, normalizing", stacklevel=3)
    q = np.empty((cap, dim), dtype=complex)
    q[0] = seed / norm

    a_list, b_list = [], []
    w = matvec(q[0])
    a_list.append(np.vdot(q[0], w).real)

    for n in range(1, cap):
        # full reorthogonalization, two classical Gram-Schmidt passes
        # (<K_m|w> computed as conj(K_m w*) to avoid conjugating the basis);
        # the second pass doubles as the orthogonality audit of the first
        coeffs = np.conj(q[:n] @ np.conj(w))
        w -= q[:n].T @ coeffs
        coeffs2 = np.conj(q[:n] @ np.conj(w))
        w -= q[:n].T @ coeffs2
        b_n = np.linalg.norm(w)
        if b_n <= tol:
            break
        resid = np.abs(coeffs2).max() / b_n
        if resid > ORTHOGONALITY_HARD_LIMIT:
            raise RuntimeError(
                f"orthogonality loss {resid:.3e} after reorthogonalization at step {n}"
            )
        q[n] = w / b_n
        b_list.append(b_n)
        w = matvec(q[n])
        a_list.append(np.vdot(q[n], w).real)

    k = len(a_list)
    basis = q[:k].copy() if store_basis else None
    return LanczosData(a=np.array(a_list), b=np.array(b_list), basis=basis)


def lanczos_state(
    h_mat: np.ndarray,
    seed: np.ndarray,
    cap: int | None = None,
    tol: float | None = None,
    store_basis: bool = False,
) -> LanczosData:
    """Krylov tridiagonalization of a Hermitian H from a seed state."""
    scale = np.abs(h_mat).max()
    if np.abs(h_mat - h_mat.conj().T).max() > 1e-10 * (scale or 1.0):
        raise ValueError("Hamiltonian must be Hermitian")
    if tol is None:
        tol = LANCZOS_RELATIVE_TOL * scale
    if cap is None:
        cap = seed.size
    return _lanczos(lambda v: h_mat @ v, seed.astype(complex), cap, tol, store_basis)


def seed_state_plus_y(n: int) -> np.ndarray:
    """Product state with every site in (|0> + i|1>)/sqrt(2), the +1 eigenstate of Y."""
    if n < 1:
        raise ValueError("need at least one site")
    single = np.array([1.0, 1.0j]) / np.sqrt(2.0)
    return reduce(np.kron, [single] * n)


# Per-site maps between matrix elements and Pauli coefficients.  With the
# site element index alpha = 2*row + col, coef_p = sum_alpha T4[p, alpha] *
# A[alpha] implements c_p = Tr[sigma_p A] / 2, and T4INV inverts it.
_T4 = np.stack([PAULI[p].T.reshape(4) / 2.0 for p in "IXYZ"])
_T4INV = np.stack([PAULI[p].reshape(4) for p in "IXYZ"], axis=1)


def _site_transform(tensor: np.ndarray, mat4: np.ndarray, n: int) -> np.ndarray:
    for axis in range(n):
        tensor = np.moveaxis(np.tensordot(mat4, tensor, axes=([1], [axis])), 0, axis)
    return tensor


def matrix_to_pauli(a_mat: np.ndarray, n: int) -> np.ndarray:
    """Coefficients of a 2^n x 2^n matrix over normalized Pauli strings."""
    t = a_mat.reshape((2,) * (2 * n))
    perm = [x for i in range(n) for x in (i, n + i)]  # interleave row/col per site
    t = np.ascontiguousarray(t.transpose(perm)).reshape((4,) * n)
    return _site_transform(t.astype(complex), _T4, n).reshape(-1)


def pauli_to_matrix(coeffs: np.ndarray, n: int) -> np.ndarray:
    """Inverse of matrix_to_pauli."""
    t = _site_transform(coeffs.reshape((4,) * n).astype(complex), _T4INV, n)
    t = t.reshape((2, 2) * n)
    perm = [2 * i for i in range(n)] + [2 * i + 1 for i in range(n)]
    d = 1 << n
    return np.ascontiguousarray(t.transpose(perm)).reshape(d, d)


def lanczos_operator(
    h_mat: np.ndarray,
    seed_op: np.ndarray,
    cap: int | None = None,
    tol: float | None = None,
    store_basis: bool = False,
) -> LanczosData:
    """Krylov tridiagonalization of the commutator map A -> [H, A].

    Vectors live in Pauli-string coordinates where the 1/D-trace inner
    product is the plain dot product.  For Hermitian H and Hermitian seed
    the diagonal coefficients vanish identically.
    """
    d = h_mat.shape[0]
    n = int(np.log2(d))
    scale = np.abs(h_mat).max()
    if np.abs(h_mat - h_mat.conj().T).max() > 1e-10 * (scale or 1.0):
        raise ValueError("Hamiltonian must be Hermitian")
    if tol is None:
        tol = LANCZOS_RELATIVE_TOL * 2.0 * scale
    if cap is None:
        cap = 4**n

    h_c = h_mat.astype(complex)

    def liouville(vec: np.ndarray) -> np.ndarray:
        a = pauli_to_matrix(vec, n)
        return matrix_to_pauli(h_c @ a - a @ h_c, n)

    seed_vec = matrix_to_pauli(seed_op.astype(complex), n)
    return _lanczos(liouville, seed_vec, cap, tol, store_basis)


def build_propagator(data: LanczosData, kind: str) -> KrylovPropagator:
    """Chain generator from Lanczos coefficients; validates the operator form."""
    if data.krylov_dim == 0:
        raise ValueError("empty Lanczos data")
    if kind not in ("state", "operator"):
        raise ValueError(f"unknown propagator kind {kind!r}")
    if kind == "operator":
        bscale = np.abs(data.b).max() if data.b.size else 1.0
        if np.abs(data.a).max() > 1e-10 * max(bscale, 1.0):
            raise ValueError(
                "operator-kind propagator requires vanishing diagonal coefficients; "
                f"got max |a_n| = {np.abs(data.a).max():.3e}"
            )
    return KrylovPropagator(kind=kind, a=data.a.copy(), b=data.b.copy())


def evolve_krylov(
    prop: KrylovPropagator,
    horizon: float,
    dt: float = RK4_DT_DEFAULT,
    store_dt: float | None = None,
    norm_tol: float = NORM_DRIFT_TOL,
    max_retries: int = 6,
) -> KrylovWavefunction:
    """RK4 integration of dphi/dt = M phi from phi = (1, 0, ..., 0).

    The norm is monitored every step; if it drifts beyond norm_tol the
    whole integration restarts with dt halved, up to max_retries.
    """
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    if store_dt is None:
        store_dt = max(dt, horizon / 400.0) if horizon > 0 else dt

    for attempt in range(max_retries + 1):
        result = _rk4_once(prop, horizon, dt, store_dt, norm_tol)
        if result is not None:
            return result
        dt /= 2.0
    raise RuntimeError(
        f"norm drift stayed above {norm_tol} after {max_retries} dt halvings"
    )


def _rk4_once(prop, horizon, dt, store_dt, norm_tol):
    k = prop.dim
    stride = max(1, int(round(store_dt / dt)))
    n_steps = int(round(horizon / dt)) if horizon > 0 else 0
    n_store = n_steps // stride

    phi = np.zeros(k, dtype=complex)
    phi[0] = 1.0
    times = [0.0]
    stored = [phi.copy()]

    mv = prop.matvec
    for step in range(1, n_steps + 1):
        k1 = mv(phi)
        k2 = mv(phi + 0.5 * dt * k1)
        k3 = mv(phi + 0.5 * dt * k2)
        k4 = mv(phi + dt * k3)
        phi = phi + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if abs(np.vdot(phi, phi).real - 1.0) > norm_tol:
            return None
        if step % stride == 0:
            times.append(step * dt)
            stored.append(phi.copy())
    del n_store
    return KrylovWavefunction(times=np.array(times), phi=np.array(stored))


def observables(wf: KrylovWavefunction) -> KrylovObservables:
    """C_K = sum_n n |phi_n|^2 and S_K = -sum |phi_n|^2 ln |phi_n|^2 (0 ln 0 = 0)."""
    probs = np.abs(wf.phi) ** 2
    k = probs.shape[1]
    c_k = probs @ np.arange(k)
    safe = np.where(probs > 0.0, probs, 1.0)
    s_k = -np.sum(probs * np.log(safe), axis=1)
    return KrylovObservables(times=wf.times.copy(), c_k=c_k, s_k=s_k)


def krylov_state_pipeline(
    params: ModelParams,
    horizon: float,
    dt: float = RK4_DT_DEFAULT,
    cap: int | None = None,
    store_dt: float | None = None,
    store_basis: bool = False,
) -> PipelineResult:
    """Build H, seed the product +y state, run Lanczos, evolve, measure."""
    h_mat = build_hamiltonian(params)
    seed = seed_state_plus_y(params.n)
    data = lanczos_state(h_mat, seed, cap=cap, store_basis=store_basis)
    prop = build_propagator(data, "state")
    wf = evolve_krylov(prop, horizon, dt=dt, store_dt=store_dt)
    return PipelineResult(lanczos=data, wavefunction=wf, observables=observables(wf))


def krylov_operator_pipeline(
    params: ModelParams,
    horizon: float,
    dt: float = RK4_DT_DEFAULT,
    cap: int | None = None,
    store_dt: float | None = None,
    store_basis: bool = False,
    seed_site: int = 0,
    operator_cap: int = OPERATOR_CAP_DEFAULT,
) -> PipelineResult:
    """Operator-growth chain seeded with the edge Z operator.

    The 4^n operator space limits this to short chains (operator_cap).
    """
    if params.n > operator_cap:
        raise ValueError(
            f"n={params.n} exceeds the operator-space cap ({operator_cap}); "
            "the 4^n vector space becomes intractable beyond it"
        )
    h_mat = build_hamiltonian(params)
    d = 1 << params.n
    seed_op = np.zeros((d, d))
    b = np.arange(d)
    seed_op[b, b] = 1.0 - 2.0 * ((b >> (params.n - 1 - seed_site)) & 1)
    data = lanczos_operator(h_mat, seed_op, cap=cap, store_basis=store_basis)
    prop = build_propagator(data, "operator")
    wf = evolve_krylov(prop, horizon, dt=dt, store_dt=store_dt)
    return PipelineResult(lanczos=data, wavefunction=wf, observables=observables(wf))
