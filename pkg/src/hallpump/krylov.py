"""Lanczos approximation of exp(-i tau A) v for Hermitian A given by its action."""

from __future__ import annotations

import numpy as np
from scipy.linalg import eigh_tridiagonal

__all__ = ["KrylovError", "expm_krylov", "as_matvec"]


class KrylovError(RuntimeError):
    pass


def as_matvec(A):
    """Callable x -> A x for sparse/dense matrices, LinearOperators or callables."""
    if callable(A) and not hasattr(A, "shape"):
        return A
    return lambda x: A @ x


def _exp_tridiag(alpha, beta, tau):
    """First column of exp(-i tau T) for the Lanczos tridiagonal T."""
    if len(alpha) == 1:
        return np.array([np.exp(-1j * tau * alpha[0])])
    w, S = eigh_tridiagonal(alpha, beta)
    return S @ (np.exp(-1j * tau * w) * S[0].conj())


def expm_krylov(A, v: np.ndarray, tau: float, tol: float = 1e-12, m_max: int = 40,
                return_info: bool = False):
    """exp(-i tau A) v by Lanczos with full reorthogonalisation.

    Convergence is declared when the a posteriori estimate
    ``beta_m |e_m^T exp(-i tau T_m) e_1|`` falls below ``tol * |v|``; if
    ``m_max`` is reached first the interval is split in halves recursively.
    ``v`` may hold several columns; each is propagated independently.
    """
    mv = as_matvec(A)
    v = np.asarray(v)
    if v.ndim == 2:
        outs = [expm_krylov(mv, v[:, k], tau, tol, m_max, return_info=True) for k in range(v.shape[1])]
        res = np.stack([o[0] for o in outs], axis=1)
        if return_info:
            return res, {"m": max(o[1]["m"] for o in outs), "splits": sum(o[1]["splits"] for o in outs)}
        return res
    nrm = np.linalg.norm(v)
    if nrm == 0 or tau == 0:
        return (v.astype(complex), {"m": 0, "splits": 0}) if return_info else v.astype(complex)
    n = len(v)
    m_cap = min(m_max, n)
    Vk = np.zeros((m_cap + 1, n), dtype=complex)
    Vk[0] = v / nrm
    alpha, beta = [], []
    for j in range(m_cap):
        w = mv(Vk[j])
        a = np.vdot(Vk[j], w).real
        w = w - a * Vk[j] - (beta[-1] * Vk[j - 1] if j else 0)
        # full reorthogonalisation, twice is enough
        for _ in range(2):
            w -= Vk[: j + 1].T @ (Vk[: j + 1].conj() @ w)
        b = np.linalg.norm(w)
        alpha.append(a)
        c = _exp_tridiag(np.array(alpha), np.array(beta), tau)
        if b < 1e-14 * max(1.0, abs(a)):
            y = Vk[: j + 1].T @ c * nrm
            return (y, {"m": j + 1, "splits": 0}) if return_info else y
        err = b * abs(c[-1])
        if err <= tol:
            y = Vk[: j + 1].T @ c * nrm
            return (y, {"m": j + 1, "splits": 0}) if return_info else y
        beta.append(b)
        Vk[j + 1] = w / b
    if n <= m_cap:
        raise KrylovError("Krylov space exhausted without convergence")
    half, info1 = expm_krylov(mv, v, tau / 2, tol / 2, m_max, return_info=True)
    y, info2 = expm_krylov(mv, half, tau / 2, tol / 2, m_max, return_info=True)
    info = {"m": m_max, "splits": 1 + info1["splits"] + info2["splits"]}
    return (y, info) if return_info else y
