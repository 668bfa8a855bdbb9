"""Mixed Gaussian biphoton source.

The correlated component is the two-photon Gaussian amplitude whose
difference coordinate ``x_B - x_A`` has standard deviation ``sigma`` and whose
sum ``x_A + x_B`` has standard deviation ``1/kappa``. In the momentum basis the
roles flip: ``k_B + k_A`` has width ``kappa`` and ``k_B - k_A`` has width
``1/sigma``. Accidental coincidences are drawn from the product of the
(shared) single-arm marginals, and ``q`` is the correlated fraction.

Units: ``sigma`` in micrometres, ``kappa`` in inverse millimetres. Position
coordinates are in um and momentum coordinates in mm^-1. Differential
entropies are reported in bits for position measured in mm, so that the
position/momentum sum is dimensionless.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from ._backend import kernels
from .errors import AccuracyError, DomainError

LOG2_PI_E = math.log2(math.pi * math.e)
LOG2_2PI = math.log2(2.0 * math.pi)
UM_PER_MM = 1000.0


class Basis(str, enum.Enum):
    POSITION = "position"
    MOMENTUM = "momentum"

    @property
    def unit(self):
        return "um" if self is Basis.POSITION else "1/mm"

    @property
    def anticorrelated(self):
        """True when the narrow correlation lies along ``b = -a``."""
        return self is Basis.MOMENTUM

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise DomainError(f"unknown basis {value!r}") from None


@dataclass(frozen=True)
class BiphotonState:
    sigma: float  # um
    kappa: float  # 1/mm
    q: float = 1.0

    def __post_init__(self):
        if not (self.sigma > 0 and self.kappa > 0):
            raise DomainError(f"sigma and kappa must be positive, got {self.sigma}, {self.kappa}")
        if not 0.0 <= self.q <= 1.0:
            raise DomainError(f"q must lie in [0, 1], got {self.q}")

    @property
    def product(self):
        """Dimensionless ``sigma * kappa``."""
        return self.sigma / UM_PER_MM * self.kappa

    @property
    def schmidt(self):
        return schmidt_from_product(self.product)

    def with_q(self, q):
        return BiphotonState(self.sigma, self.kappa, q)

    @classmethod
    def from_schmidt(cls, K, q, kappa=1.0):
        """State with Schmidt number ``K`` on the ``sigma * kappa <= 1`` branch."""
        return cls(product_from_schmidt(K) / kappa * UM_PER_MM, kappa, q)


def schmidt_from_product(t):
    if not t > 0:
        raise DomainError(f"sigma*kappa must be positive, got {t}")
    return 0.5 * (t + 1.0 / t)


def schmidt_number(sigma, kappa):
    """Schmidt number for ``sigma`` in um and ``kappa`` in mm^-1."""
    if not (sigma > 0 and kappa > 0):
        raise DomainError("sigma and kappa must be positive")
    return schmidt_from_product(sigma / UM_PER_MM * kappa)


def product_from_schmidt(K):
    """Invert ``K = (t + 1/t)/2`` on the branch ``t <= 1``."""
    if not K >= 1.0:
        raise DomainError(f"Schmidt number must be >= 1, got {K}")
    # 1 / (K + sqrt(K^2 - 1)) equals K - sqrt(K^2 - 1) without the cancellation
    return 1.0 / (K + math.sqrt(K * K - 1.0))


def pair_widths(state, basis):
    """Standard deviations ``(s_diff, s_sum)`` of ``b - a`` and ``a + b``.

    Returned in the native coordinate unit of ``basis``.
    """
    basis = Basis.parse(basis)
    if basis is Basis.POSITION:
        return state.sigma, UM_PER_MM / state.kappa
    return UM_PER_MM / state.sigma, state.kappa


def marginal_variance(state, basis):
    s_d, s_s = pair_widths(state, basis)
    return 0.25 * (s_d * s_d + s_s * s_s)


def _rot_gauss(u, s):
    return np.exp(-0.5 * (u / s) ** 2) / (math.sqrt(2.0 * math.pi) * s)


def correlated_density(s_diff, s_sum, a, b):
    """Density of the correlated component in ``(a, b)`` coordinates."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    # d(a,b) = d(u,w)/2 for u = b-a, w = a+b
    return 2.0 * _rot_gauss(b - a, s_diff) * _rot_gauss(a + b, s_sum)


def joint_density(state, basis, a, b):
    """Coincidence density ``q|psi|^2 + (1-q) p(a) p(b)``."""
    s_d, s_s = pair_widths(state, basis)
    m = math.sqrt(0.25 * (s_d * s_d + s_s * s_s))
    corr = correlated_density(s_d, s_s, a, b)
    acc = _rot_gauss(np.asarray(a, float), m) * _rot_gauss(np.asarray(b, float), m)
    return state.q * corr + (1.0 - state.q) * acc


def marginal_density(state, basis, a):
    return _rot_gauss(np.asarray(a, dtype=float), math.sqrt(marginal_variance(state, basis)))


def _sinh_nodes(s_small, s_big, span, n):
    """Quadrature nodes clustered on the narrow scale, reaching ``span*s_big``."""
    smax = math.asinh(span * s_big / s_small)
    t = np.linspace(-smax, smax, n)
    dt = t[1] - t[0]
    x = s_small * np.sinh(t)
    w = s_small * np.cosh(t) * dt
    w[0] *= 0.5
    w[-1] *= 0.5
    return x, w


def conditional_entropy_gaussian_mixture(s_diff, s_sum, q, n_nodes=512, span=8.0, mass_tol=1e-8):
    """``h(b|a)`` in bits for the two-component mixture with the given widths.

    Integrates in rotated coordinates ``u = b - a``, ``w = a + b`` where both
    components factorize; the marginal entropy is closed form.
    """
    if n_nodes < 16:
        raise DomainError("n_nodes must be at least 16")
    m2 = 0.25 * (s_diff * s_diff + s_sum * s_sum)
    s_acc = math.sqrt(2.0 * m2)  # u and w of accidental pairs
    u, wu = _sinh_nodes(min(s_diff, s_acc), max(s_diff, s_acc), span, n_nodes)
    v, wv = _sinh_nodes(min(s_sum, s_acc), max(s_sum, s_acc), span, n_nodes)
    mass, plogp = kernels.mixture_plogp(
        wu, wv,
        _rot_gauss(u, s_diff), _rot_gauss(v, s_sum),
        _rot_gauss(u, s_acc), _rot_gauss(v, s_acc),
        float(q), float(1.0 - q),
    )
    if abs(mass - 1.0) > mass_tol:
        raise AccuracyError(
            f"quadrature grid captures mass {mass:.12f}; widen span or add nodes")
    h_uw = -plogp / math.log(2.0)
    h_joint = h_uw - 1.0  # |d(u,w)/d(a,b)| = 2
    h_marg = 0.5 * math.log2(2.0 * math.pi * math.e * m2)
    return h_joint - h_marg


def conditional_differential_entropy(state, basis, n_nodes=512, span=8.0):
    """``h(b|a)`` in bits, position coordinates in mm, momentum in mm^-1."""
    basis = Basis.parse(basis)
    s_d, s_s = pair_widths(state, basis)
    if basis is Basis.POSITION:
        s_d, s_s = s_d / UM_PER_MM, s_s / UM_PER_MM
    return conditional_entropy_gaussian_mixture(s_d, s_s, state.q, n_nodes, span)


def differential_entropy_sum(state, n_nodes=512, span=8.0):
    """Conditional differential entropy sum over position and momentum, in bits."""
    return (conditional_differential_entropy(state, Basis.POSITION, n_nodes, span)
            + conditional_differential_entropy(state, Basis.MOMENTUM, n_nodes, span))


def _entropy_sum_by_duality(t, q, n_nodes=512, span=8.0):
    # A reflection b -> -b maps the momentum problem onto the position one
    # (widths swap), so h_x + h_k = 2 h(t, 1) - log2 t in kappa = 1 units.
    h = conditional_entropy_gaussian_mixture(t, 1.0, q, n_nodes, span)
    return 2.0 * h - math.log2(t)


def entropy_sum_closed_form(state):
    """Closed forms at the mixture endpoints: ``log2(pi e / K)`` for q=1, ``log2(pi e K)`` for q=0."""
    if state.q == 1.0:
        return LOG2_PI_E - math.log2(state.schmidt)
    if state.q == 0.0:
        return LOG2_PI_E + math.log2(state.schmidt)
    raise DomainError("closed form exists only for q in {0, 1}")


def inference_variances(state):
    """``(Var(x_B - x_A) [mm^2], Var(k_B + k_A) [mm^-2])``."""
    s = state.sigma / UM_PER_MM
    k = state.kappa
    t2 = (s * k) ** 2
    var_x = state.q * s * s + (1.0 - state.q) * (1.0 + t2) / (2.0 * k * k)
    var_k = state.q * k * k + (1.0 - state.q) * (1.0 + t2) / (2.0 * s * s)
    return var_x, var_k


def variance_witness_analytic(state):
    """Product of inference variances; steering is certified below 1/4."""
    var_x, var_k = inference_variances(state)
    return var_x * var_k


# -- coarse graining ------------------------------------------------------

_GL_X, _GL_W = np.polynomial.legendre.leggauss(6)


def _cell_nodes(edges):
    edges = np.asarray(edges, dtype=float)
    lo, hi = edges[:-1], edges[1:]
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    x = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    w = (half[:, None] * _GL_W[None, :]).ravel()
    return x, w


def gaussian_pair_cell_mass(s_diff, s_sum, edges_a, edges_b, center_a=0.0, center_b=0.0):
    """Probability mass of the correlated component in each rectangular cell.

    Uses 6x6 Gauss-Legendre nodes per cell; accurate when the cells are not
    much wider than the narrower of the two widths.
    """
    xa, wa = _cell_nodes(edges_a)
    xb, wb = _cell_nodes(edges_b)
    dens = correlated_density(s_diff, s_sum, xa[:, None] - center_a, xb[None, :] - center_b)
    na, nb = len(edges_a) - 1, len(edges_b) - 1
    g = _GL_X.size
    cell = (dens * wa[:, None] * wb[None, :]).reshape(na, g, nb, g).sum(axis=(1, 3))
    return cell


def gaussian_cell_mass(std, edges, center=0.0):
    """Mass of ``N(center, std^2)`` in each 1-D cell (exact, via erf)."""
    z = (np.asarray(edges, dtype=float) - center) / (math.sqrt(2.0) * std)
    return 0.5 * np.diff(special.erf(z))


def cell_probabilities(state, basis, edges_a, edges_b, normalize=True):
    """Coincidence probabilities of each cell, renormalized over the grid by default."""
    s_d, s_s = pair_widths(state, basis)
    m = math.sqrt(0.25 * (s_d * s_d + s_s * s_s))
    corr = gaussian_pair_cell_mass(s_d, s_s, edges_a, edges_b)
    acc = np.outer(gaussian_cell_mass(m, edges_a), gaussian_cell_mass(m, edges_b))
    p = state.q * corr + (1.0 - state.q) * acc
    if normalize:
        p = p / p.sum()
    return p


def discrete_conditional_entropy(p):
    """``H(b|a) = H(a,b) - H(a)`` in bits for a joint probability table."""
    p = np.asarray(p, dtype=float)
    p = p / p.sum()
    pa = p.sum(axis=1)
    return _h(p) - _h(pa)


def _h(p):
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


def coarse_grained_entropy_sum(state, grid_x, grid_k):
    """Exact coarse-grained ``H(x_B|x_A) + H(k_B|k_A)`` on the given grids (bits)."""
    hx = discrete_conditional_entropy(
        cell_probabilities(state, Basis.POSITION, grid_x.edges, grid_x.edges))
    hk = discrete_conditional_entropy(
        cell_probabilities(state, Basis.MOMENTUM, grid_k.edges, grid_k.edges))
    return hx + hk


# -- witness maps ---------------------------------------------------------

@dataclass
class WitnessMap:
    K: np.ndarray
    q: np.ndarray
    entropy_sum: np.ndarray  # shape (len(q), len(K)), bits
    variance_product: np.ndarray
    levels: dict


def witness_map(K_range=(1.0, 20.0), q_range=(0.0, 1.0), resolution=(50, 50), n_nodes=512):
    """Entropic and variance witnesses over a (K, q) grid.

    Rows index ``q`` and columns index ``K``. ``resolution`` is ``(n_K, n_q)``.
    """
    if isinstance(resolution, int):
        resolution = (resolution, resolution)
    nK, nq = resolution
    if nK < 2 or nq < 2:
        raise DomainError("resolution must be at least 2 per axis")
    if K_range[0] < 1.0 or K_range[1] < K_range[0]:
        raise DomainError(f"invalid K range {K_range}")
    if not (0.0 <= q_range[0] <= q_range[1] <= 1.0):
        raise DomainError(f"invalid q range {q_range}")
    Ks = np.linspace(K_range[0], K_range[1], nK)
    qs = np.linspace(q_range[0], q_range[1], nq)
    ent = np.empty((nq, nK))
    var = np.empty((nq, nK))
    for j, K in enumerate(Ks):
        t = product_from_schmidt(K)
        st = BiphotonState.from_schmidt(K, 1.0)
        for i, q in enumerate(qs):
            ent[i, j] = _entropy_sum_by_duality(t, q, n_nodes)
            var[i, j] = variance_witness_analytic(st.with_q(q))
    levels = {"steering_entropy": LOG2_PI_E, "eof_entropy": LOG2_2PI, "steering_variance": 0.25}
    return WitnessMap(Ks, qs, ent, var, levels)
