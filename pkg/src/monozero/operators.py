"""Monotone affine operators, their resolvents and Yosida approximations.

All built-in operators are affine, M(x) = Jx + c (optionally plus a
strongly monotone shift kappa*x). Monotonicity is equivalent to the
symmetric part of the linear term being positive semidefinite, which is
validated at construction time. The Lipschitz constant and the strong
monotonicity modulus are computed once and cached on the spec.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MONOTONE_TOL = 1e-10
_POWER_ITER_TOL = 1e-10  # relative; documented accuracy is 1e-6
_POWER_ITER_MAX = 50_000


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class OperatorSpec:
    """An affine monotone operator M(x) = Jx + c + shift*x.

    ``lipschitz`` and ``strong_modulus`` are cached at construction:
    the spectral norm of the total linear part and the smallest
    eigenvalue of its symmetric part clamped at zero.
    """

    kind: str
    linear_part: np.ndarray
    offset: np.ndarray
    shift: float
    lipschitz: float
    strong_modulus: float
    total_linear: np.ndarray = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        if self.total_linear is None:
            total = self.linear_part + self.shift * np.eye(self.linear_part.shape[0])
            object.__setattr__(self, "total_linear", _readonly(total))

    @property
    def dim(self) -> int:
        return self.offset.shape[0]

    def eval(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(
                f"dimension mismatch: operator acts on R^{self.dim}, "
                f"input has shape {x.shape}"
            )
        return self.total_linear @ x + self.offset

    __call__ = eval


def _make_operator(kind: str, J: np.ndarray, c: np.ndarray, shift: float) -> OperatorSpec:
    J = np.asarray(J, dtype=float)
    c = np.asarray(c, dtype=float)
    if J.ndim != 2 or J.shape[0] != J.shape[1]:
        raise ValueError(f"linear part must be square, got shape {J.shape}")
    if c.shape != (J.shape[0],):
        raise ValueError(
            f"dimension mismatch: linear part is {J.shape[0]}x{J.shape[1]}, "
            f"offset has shape {c.shape}"
        )
    if shift < 0:
        raise ValueError(f"shift must be nonnegative, got {shift}")
    total = J + shift * np.eye(J.shape[0])
    sym_eigs = np.linalg.eigvalsh(0.5 * (total + total.T))
    if sym_eigs.min() < -MONOTONE_TOL:
        raise ValueError(
            "operator is not monotone: symmetric part has eigenvalue "
            f"{sym_eigs.min():.3e} < -{MONOTONE_TOL:.0e}"
        )
    return OperatorSpec(
        kind=kind,
        linear_part=_readonly(J),
        offset=_readonly(c),
        shift=float(shift),
        lipschitz=_spectral_norm(total),
        strong_modulus=float(max(sym_eigs.min(), 0.0)),
        total_linear=_readonly(total),
    )


def affine_operator(linear_part: np.ndarray, offset: np.ndarray) -> OperatorSpec:
    """Build M(x) = Jx + c, validating monotonicity of J."""
    return _make_operator("affine", linear_part, offset, 0.0)


def shifted_operator(linear_part: np.ndarray, offset: np.ndarray, shift: float) -> OperatorSpec:
    """Build M(x) = Jx + c + kappa*x for kappa >= 0."""
    return _make_operator("strongly-monotone-shift", linear_part, offset, shift)


def rotation_operator() -> OperatorSpec:
    """Counterclockwise rotation by pi/2 in the plane; monotone, L = 1, no zero drift."""
    return affine_operator([[0.0, -1.0], [1.0, 0.0]], [0.0, 0.0])


def zero_operator(n: int) -> OperatorSpec:
    return affine_operator(np.zeros((n, n)), np.zeros(n))


def identity_operator(n: int) -> OperatorSpec:
    """M = Id; 1-strongly monotone with L = 1 and zero at the origin."""
    return affine_operator(np.eye(n), np.zeros(n))


def strong_rotation_operator(n: int = 2) -> OperatorSpec:
    """M = Id + block-diagonal pi/2 rotations; strongly monotone with modulus 1.

    Requires even ``n``. The symmetric part is the identity, so the
    modulus is exactly 1 while L = sqrt(2).
    """
    if n < 2 or n % 2:
        raise ValueError(f"strong rotation operator needs even n >= 2, got {n}")
    R = np.array([[0.0, -1.0], [1.0, 0.0]])
    J = np.kron(np.eye(n // 2), R)
    return shifted_operator(J, np.zeros(n), 1.0)


@dataclass(frozen=True)
class ZeroCertificate:
    """A solution x* of M(x) = 0 together with its verified residual."""

    x_star: np.ndarray
    residual: float


@dataclass(frozen=True)
class BilinearProblem:
    """The bilinear-quadratic saddle problem min_x max_y phi(x, y).

    phi(x, y) = 0.5 <x, Hx> - <x, h> - <y, Ax - b> with H = 2 A^T A.
    The associated monotone operator is M(x, y) = (Hx - h - A^T y, Ax - b).
    """

    n: int
    A: np.ndarray
    H: np.ndarray
    b: np.ndarray
    h: np.ndarray
    operator: OperatorSpec
    certificate: ZeroCertificate

    def phi(self, x: np.ndarray, y: np.ndarray) -> float:
        return float(0.5 * x @ (self.H @ x) - x @ self.h - y @ (self.A @ x - self.b))

    def split(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return z[: self.n], z[self.n :]

    @property
    def saddle(self) -> tuple[np.ndarray, np.ndarray]:
        return self.split(self.certificate.x_star)


def _band_matrix(n: int) -> np.ndarray:
    # +1/4 on the anti-diagonal, -1/4 one column to its left, and a lone
    # +1/4 in the bottom-left corner.
    A = np.zeros((n, n))
    for i in range(n - 1):
        A[i, n - 2 - i] = -0.25
        A[i, n - 1 - i] = 0.25
    A[n - 1, 0] = 0.25
    return A


def bilinear_problem(n: int) -> BilinearProblem:
    """Construct the 2n-dimensional saddle operator of the benchmark game."""
    if n < 2:
        raise ValueError(f"bilinear problem needs n >= 2, got {n}")
    A = _band_matrix(n)
    H = 2.0 * A.T @ A
    b = 0.25 * np.ones(n)
    h = np.zeros(n)
    h[-1] = 0.25
    J = np.block([[H, -A.T], [A, np.zeros((n, n))]])
    c = np.concatenate([-h, -b])
    op = affine_operator(J, c)
    try:
        x_star = np.linalg.solve(J, -c)
    except np.linalg.LinAlgError as exc:
        raise ValueError(
            "saddle system is singular: numerical rank "
            f"{np.linalg.matrix_rank(J)} < {2 * n}"
        ) from exc
    residual = float(np.linalg.norm(op.eval(x_star)))
    if residual > 1e-10 * (1.0 + np.linalg.norm(x_star)):
        raise ValueError(f"computed zero failed verification, residual {residual:.3e}")
    cert = ZeroCertificate(x_star=_readonly(x_star), residual=residual)
    return BilinearProblem(n=n, A=_readonly(A), H=_readonly(H), b=_readonly(b),
                           h=_readonly(h), operator=op, certificate=cert)


def build_bilinear(n: int) -> tuple[OperatorSpec, ZeroCertificate]:
    """Operator plus certified zero for the bilinear benchmark game."""
    prob = bilinear_problem(n)
    return prob.operator, prob.certificate


def resolvent(op: OperatorSpec, mu: float, z: np.ndarray, method: str = "auto") -> np.ndarray:
    """Evaluate (Id + mu*M)^{-1} at z.

    ``method`` selects the solver: "direct" factorizes Id + mu*J (affine
    operators only), "iterative" runs the fixed-point map x <- z - mu*M(x),
    which is a contraction iff mu*L < 1; "auto" prefers direct.
    """
    if mu <= 0:
        raise ValueError(f"resolvent parameter mu must be positive, got {mu}")
    z = np.asarray(z, dtype=float)
    if z.shape != (op.dim,):
        raise ValueError(
            f"dimension mismatch: operator acts on R^{op.dim}, input has shape {z.shape}"
        )
    if mu < 1e-300:
        # J_mu -> Id as mu -> 0; below this scale mu*J underflows anyway.
        return z.copy()
    if method in ("auto", "direct"):
        lhs = np.eye(op.dim) + mu * op.total_linear
        return np.linalg.solve(lhs, z - mu * op.offset)
    if method == "iterative":
        rate = mu * op.lipschitz
        if rate >= 1.0:
            raise ValueError(
                f"fixed-point resolvent requires mu*L < 1, got mu*L = {rate:.6g}"
            )
        x = z.copy()
        for _ in range(10_000):
            x_new = z - mu * op.eval(x)
            if np.linalg.norm(x_new - x) <= 1e-13:
                return x_new
            x = x_new
        return x
    raise ValueError(f"unknown resolvent method {method!r}")


def yosida(op: OperatorSpec, mu: float, z: np.ndarray, method: str = "auto") -> np.ndarray:
    """Evaluate the Yosida approximation (z - J_mu(z)) / mu.

    Satisfies M(J_mu(z)) = yosida(z) for monotone M.
    """
    if mu <= 0:
        raise ValueError(f"resolvent parameter mu must be positive, got {mu}")
    z = np.asarray(z, dtype=float)
    if mu < 1e-300:
        return np.zeros_like(z)
    return (z - resolvent(op, mu, z, method=method)) / mu


def _spectral_norm(matrix: np.ndarray) -> float:
    """Largest singular value by power iteration on A^T A.

    Converges to relative accuracy well below 1e-6 on the matrices used
    here; a deterministic start vector keeps results reproducible.
    """
    B = matrix.T @ matrix
    n = B.shape[0]
    scale = np.abs(B).max()
    if scale == 0.0:
        return 0.0
    v = np.cos(np.arange(1, n + 1, dtype=float))  # deterministic, generic start
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(_POWER_ITER_MAX):
        w = B @ v
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:  # start vector in the kernel; restart shifted
            v = np.ones(n) / np.sqrt(n)
            continue
        v_new = w / norm_w
        lam_new = float(v_new @ (B @ v_new))
        if abs(lam_new - lam) <= _POWER_ITER_TOL * max(lam_new, scale * 1e-12):
            lam = lam_new
            break
        lam = lam_new
        v = v_new
    return float(np.sqrt(lam))


def lipschitz_estimate(op: OperatorSpec) -> float:
    """Spectral norm of the total linear part (power iteration)."""
    return _spectral_norm(op.total_linear)
