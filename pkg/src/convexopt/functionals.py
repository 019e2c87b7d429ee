"""Boundary integrands G(theta, u, p) and the discrete shape functional.

A shape functional j(u) = integral of G(theta, u, u') over the period is
discretized by the midpoint rule on the staggered grid:

    j_h(u) = h * sum_i G(theta_{i+1/2}, (u_i + u_{i+1})/2, (u_{i+1} - u_i)/h).

Midpoint evaluation of u' avoids averaging across corner cells, where u'
jumps.  Each builtin carries hand-derived first and second partials so that
stationarity residuals are limited by the optimizer, not the derivatives;
every catalog entry is cross-checked against finite differences in the test
suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .periodic import PeriodicGrid, RadialFunction, TWO_PI


@dataclass(frozen=True)
class FunctionalSpec:
    """An integrand G with its partial derivatives and structure flags.

    All callables take (theta, u, p) as numpy arrays (broadcastable) and
    return arrays of the broadcast shape.
    """

    name: str
    eval: callable
    g_u: callable
    g_p: callable
    g_uu: callable
    g_up: callable
    g_pp: callable
    even_in_p: bool = True
    theta_independent: bool = True
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class DerivativeBounds:
    """Sampled sup/inf of second partials over T x [a,b] x [-C(b), C(b)]."""

    k_uu: float
    k_up: float
    k_pp: float          # inf |G_pp|; positive only if G_pp < 0 on the whole box
    c_b: float           # slope bound 2*pi*b used for the p-range
    strongly_concave: bool
    samples: int


class NonFiniteValueError(ValueError):
    """G evaluated to a non-finite value at a quadrature midpoint."""


def _midpoint_data(u: RadialFunction):
    v = u.values
    h = u.grid.spacing
    ubar = 0.5 * (v + np.roll(v, -1))
    p = (np.roll(v, -1) - v) / h
    return u.grid.midpoints, ubar, p


def eval_functional(spec: FunctionalSpec, u: RadialFunction) -> float:
    """Midpoint-rule value of the discrete functional j_h(u)."""
    theta, ubar, p = _midpoint_data(u)
    g = np.asarray(spec.eval(theta, ubar, p), dtype=float)
    if not np.all(np.isfinite(g)):
        i = int(np.flatnonzero(~np.isfinite(g))[0])
        raise NonFiniteValueError(
            f"{spec.name}: non-finite value at midpoint {i} "
            f"(theta={theta[i]:.6f}, u={ubar[i]:.6f}, p={p[i]:.6f})"
        )
    return float(u.grid.spacing * g.sum())


def gradient(spec: FunctionalSpec, u: RadialFunction) -> np.ndarray:
    """Exact gradient of j_h with respect to the nodal values.

    Node k enters the two midpoint terms k-1 and k; the chain rule gives
    g_k = (h/2)(G_u^k + G_u^{k-1}) + (G_p^{k-1} - G_p^k).
    """
    theta, ubar, p = _midpoint_data(u)
    h = u.grid.spacing
    gu = np.asarray(spec.g_u(theta, ubar, p), dtype=float)
    gp = np.asarray(spec.g_p(theta, ubar, p), dtype=float)
    if not (np.all(np.isfinite(gu)) and np.all(np.isfinite(gp))):
        raise NonFiniteValueError(f"{spec.name}: non-finite partials in gradient")
    return 0.5 * h * (gu + np.roll(gu, 1)) + (np.roll(gp, 1) - gp)


def hessian_diagonals(spec: FunctionalSpec, u: RadialFunction):
    """Hessian of j_h as cyclic tridiagonal diagonals (d0, d1).

    d0[k] is the (k, k) entry; d1[k] couples nodes k and k+1 (mod N).
    """
    theta, ubar, p = _midpoint_data(u)
    h = u.grid.spacing
    guu = np.asarray(spec.g_uu(theta, ubar, p), dtype=float)
    gup = np.asarray(spec.g_up(theta, ubar, p), dtype=float)
    gpp = np.asarray(spec.g_pp(theta, ubar, p), dtype=float)
    d0 = 0.25 * h * (guu + np.roll(guu, 1)) + (np.roll(gup, 1) - gup) \
        + (gpp + np.roll(gpp, 1)) / h
    d1 = 0.25 * h * guu - gpp / h
    return d0, d1


def hessian_matrix(spec: FunctionalSpec, u: RadialFunction) -> np.ndarray:
    """Dense Hessian of j_h (cyclic tridiagonal)."""
    n = u.grid.n_points
    d0, d1 = hessian_diagonals(spec, u)
    hess = np.zeros((n, n))
    idx = np.arange(n)
    hess[idx, idx] = d0
    hess[idx, (idx + 1) % n] += d1
    hess[(idx + 1) % n, idx] += d1
    return hess


def second_order_form(spec: FunctionalSpec, u: RadialFunction, v: np.ndarray) -> float:
    """Second directional derivative of j_h at u in the direction v."""
    theta, ubar, p = _midpoint_data(u)
    h = u.grid.spacing
    v = np.asarray(v, dtype=float)
    vbar = 0.5 * (v + np.roll(v, -1))
    vp = (np.roll(v, -1) - v) / h
    guu = np.asarray(spec.g_uu(theta, ubar, p), dtype=float)
    gup = np.asarray(spec.g_up(theta, ubar, p), dtype=float)
    gpp = np.asarray(spec.g_pp(theta, ubar, p), dtype=float)
    return float(h * np.sum(guu * vbar ** 2 + 2.0 * gup * vbar * vp + gpp * vp ** 2))


# ---------------------------------------------------------------------------
# builtin catalog
# ---------------------------------------------------------------------------

def _spec(name, params, G, Gu, Gp, Guu, Gup, Gpp, even=True):
    return FunctionalSpec(
        name=name, params=dict(params),
        eval=G, g_u=Gu, g_p=Gp, g_uu=Guu, g_up=Gup, g_pp=Gpp,
        even_in_p=even, theta_independent=True,
    )


def _quad_circle(c):
    return _spec(
        "quad_circle", {"c": c},
        lambda t, u, p: 0.5 * ((u - c) ** 2 + p ** 2),
        lambda t, u, p: u - c,
        lambda t, u, p: p + 0.0 * u,
        lambda t, u, p: np.ones_like(u + p),
        lambda t, u, p: np.zeros_like(u + p),
        lambda t, u, p: np.ones_like(u + p),
    )


def _concave_circle_a():
    return _spec(
        "concave_circle_a", {},
        lambda t, u, p: 0.5 * (u ** 2 - p ** 2),
        lambda t, u, p: u + 0.0 * p,
        lambda t, u, p: -p + 0.0 * u,
        lambda t, u, p: np.ones_like(u + p),
        lambda t, u, p: np.zeros_like(u + p),
        lambda t, u, p: -np.ones_like(u + p),
    )


def _concave_circle_b():
    return _spec(
        "concave_circle_b", {},
        lambda t, u, p: -0.5 * (u ** 2 + p ** 2),
        lambda t, u, p: -u + 0.0 * p,
        lambda t, u, p: -p + 0.0 * u,
        lambda t, u, p: -np.ones_like(u + p),
        lambda t, u, p: np.zeros_like(u + p),
        lambda t, u, p: -np.ones_like(u + p),
    )


# Negative perimeter: G = -sqrt(u^2 + p^2) / u^2.
def _np_G(t, u, p):
    return -np.sqrt(u ** 2 + p ** 2) / u ** 2


def _np_Gu(t, u, p):
    s = np.sqrt(u ** 2 + p ** 2)
    return (u ** 2 + 2.0 * p ** 2) / (s * u ** 3)


def _np_Gp(t, u, p):
    s = np.sqrt(u ** 2 + p ** 2)
    return -p / (s * u ** 2)


def _np_Guu(t, u, p):
    s = np.sqrt(u ** 2 + p ** 2)
    return -(2.0 * u ** 4 + 9.0 * u ** 2 * p ** 2 + 6.0 * p ** 4) / (s ** 3 * u ** 4)


def _np_Gup(t, u, p):
    s = np.sqrt(u ** 2 + p ** 2)
    return p * (3.0 * u ** 2 + 2.0 * p ** 2) / (s ** 3 * u ** 3)


def _np_Gpp(t, u, p):
    return -(u ** 2 + p ** 2) ** -1.5


def _neg_perimeter():
    return _spec("neg_perimeter", {}, _np_G, _np_Gu, _np_Gp, _np_Guu, _np_Gup, _np_Gpp)


def _area_minus_perimeter(lam):
    # G = lam/(2u^2) - sqrt(u^2+p^2)/u^2: lam*|area integrand| plus neg_perimeter.
    return _spec(
        "area_minus_perimeter", {"lam": lam},
        lambda t, u, p: 0.5 * lam / u ** 2 + _np_G(t, u, p),
        lambda t, u, p: -lam / u ** 3 + _np_Gu(t, u, p),
        _np_Gp,
        lambda t, u, p: 3.0 * lam / u ** 4 + _np_Guu(t, u, p),
        _np_Gup,
        _np_Gpp,
    )


def _crouzeix(h=None, dh=None, d2h=None):
    """G = h(p/u) with h strictly concave and even.  Default h(t) = -t^2."""
    if h is None:
        h, dh, d2h = (lambda t: -t ** 2), (lambda t: -2.0 * t), (lambda t: -2.0 + 0.0 * t)
    if dh is None or d2h is None:
        raise ValueError("crouzeix with a custom h needs dh and d2h as well")

    def G(t, u, p):
        return h(p / u)

    def Gu(t, u, p):
        return -dh(p / u) * p / u ** 2

    def Gp(t, u, p):
        return dh(p / u) / u

    def Guu(t, u, p):
        r = p / u
        return d2h(r) * p ** 2 / u ** 4 + 2.0 * dh(r) * p / u ** 3

    def Gup(t, u, p):
        r = p / u
        return -d2h(r) * p / u ** 3 - dh(r) / u ** 2

    def Gpp(t, u, p):
        return d2h(p / u) / u ** 2

    return _spec("crouzeix", {}, G, Gu, Gp, Guu, Gup, Gpp)


def _newton_like(a, b, h1=None, dh1=None, d2h1=None, h2=None, dh2=None, d2h2=None):
    """G = h1(u) - p^2 h2(u).

    Defaults h1(u) = (u - c)^2 with c = (a+b)/2 and h2(u) = u - a satisfy
    h1'(a) < 0, h1'(b) > 0, h2(a) = 0 and h2 > 0 on (a, b].
    """
    c = 0.5 * (a + b)
    if h1 is None:
        h1, dh1, d2h1 = (lambda u: (u - c) ** 2), (lambda u: 2.0 * (u - c)), (lambda u: 2.0 + 0.0 * u)
    if h2 is None:
        h2, dh2, d2h2 = (lambda u: u - a), (lambda u: 1.0 + 0.0 * u), (lambda u: 0.0 * u)

    return _spec(
        "newton_like", {"a": a, "b": b},
        lambda t, u, p: h1(u) - p ** 2 * h2(u),
        lambda t, u, p: dh1(u) - p ** 2 * dh2(u),
        lambda t, u, p: -2.0 * p * h2(u),
        lambda t, u, p: d2h1(u) - p ** 2 * d2h2(u),
        lambda t, u, p: -2.0 * p * dh2(u),
        lambda t, u, p: -2.0 * h2(u),
    )


def _degenerate_i(a, c):
    # G = ((u-c)^2 + (u-a)^2 p^2) / 2; G_pp(a, p) = 0 identically.
    return _spec(
        "degenerate_i", {"a": a, "c": c},
        lambda t, u, p: 0.5 * ((u - c) ** 2 + (u - a) ** 2 * p ** 2),
        lambda t, u, p: (u - c) + (u - a) * p ** 2,
        lambda t, u, p: (u - a) ** 2 * p,
        lambda t, u, p: 1.0 + p ** 2,
        lambda t, u, p: 2.0 * (u - a) * p,
        lambda t, u, p: (u - a) ** 2 + 0.0 * p,
    )


def smoothstep(x):
    """C^2 quintic step: 0 for x <= 0, 1 for x >= 1, 6x^5 - 15x^4 + 10x^3 between."""
    x = np.clip(x, 0.0, 1.0)
    return x ** 3 * (10.0 + x * (-15.0 + 6.0 * x))


def smoothstep_d1(x):
    x = np.asarray(x, dtype=float)
    inside = (x > 0.0) & (x < 1.0)
    xc = np.clip(x, 0.0, 1.0)
    return np.where(inside, 30.0 * xc ** 2 * (xc - 1.0) ** 2, 0.0)


def smoothstep_d2(x):
    x = np.asarray(x, dtype=float)
    inside = (x > 0.0) & (x < 1.0)
    xc = np.clip(x, 0.0, 1.0)
    return np.where(inside, 60.0 * xc * (xc - 1.0) * (2.0 * xc - 1.0), 0.0)


def _step_on(a, b):
    w = b - a

    def phi(u):
        return smoothstep((u - a) / w)

    def dphi(u):
        return smoothstep_d1((u - a) / w) / w

    def d2phi(u):
        return smoothstep_d2((u - a) / w) / w ** 2

    return phi, dphi, d2phi


def _cutoff_ii(a, b):
    # G = (u^2 - phi(u) p^2)/2 with phi a smooth step from 0 below a to 1 above b.
    phi, dphi, d2phi = _step_on(a, b)
    return _spec(
        "cutoff_ii", {"a": a, "b": b},
        lambda t, u, p: 0.5 * (u ** 2 - phi(u) * p ** 2),
        lambda t, u, p: u - 0.5 * dphi(u) * p ** 2,
        lambda t, u, p: -phi(u) * p,
        lambda t, u, p: 1.0 - 0.5 * d2phi(u) * p ** 2,
        lambda t, u, p: -dphi(u) * p,
        lambda t, u, p: -phi(u) + 0.0 * p,
    )


def _cutoff_iii(a, b):
    phi, dphi, d2phi = _step_on(a, b)
    return _spec(
        "cutoff_iii", {"a": a, "b": b},
        lambda t, u, p: -0.5 * (u ** 2 + phi(u) * p ** 2),
        lambda t, u, p: -u - 0.5 * dphi(u) * p ** 2,
        lambda t, u, p: -phi(u) * p,
        lambda t, u, p: -1.0 - 0.5 * d2phi(u) * p ** 2,
        lambda t, u, p: -dphi(u) * p,
        lambda t, u, p: -phi(u) + 0.0 * p,
    )


BUILTIN_NAMES = (
    "quad_circle", "concave_circle_a", "concave_circle_b", "neg_perimeter",
    "area_minus_perimeter", "crouzeix", "newton_like", "degenerate_i",
    "cutoff_ii", "cutoff_iii",
)


def builtin(name: str, a: float = 1.0, b: float = 2.0, **params) -> FunctionalSpec:
    """Look up a catalog integrand by name.

    a and b supply annulus-dependent defaults (c = (a+b)/2 for the circle
    targets, the step window for the cutoff variants).  Extra keyword
    params override per-functional defaults; callables for the crouzeix /
    newton_like profiles can only be passed programmatically.
    """
    if not (0.0 < a < b):
        raise ValueError(f"need 0 < a < b, got a={a}, b={b}")
    c_mid = 0.5 * (a + b)
    if name == "quad_circle":
        return _quad_circle(float(params.pop("c", c_mid)))
    if name == "concave_circle_a":
        return _concave_circle_a()
    if name == "concave_circle_b":
        return _concave_circle_b()
    if name == "neg_perimeter":
        return _neg_perimeter()
    if name == "area_minus_perimeter":
        return _area_minus_perimeter(float(params.pop("lam", c_mid)))
    if name == "crouzeix":
        return _crouzeix(params.pop("h", None), params.pop("dh", None), params.pop("d2h", None))
    if name == "newton_like":
        return _newton_like(
            float(params.pop("a", a)), float(params.pop("b", b)),
            params.pop("h1", None), params.pop("dh1", None), params.pop("d2h1", None),
            params.pop("h2", None), params.pop("dh2", None), params.pop("d2h2", None),
        )
    if name == "degenerate_i":
        return _degenerate_i(float(params.pop("a", a)), float(params.pop("c", c_mid)))
    if name == "cutoff_ii":
        return _cutoff_ii(float(params.pop("a", a)), float(params.pop("b", b)))
    if name == "cutoff_iii":
        return _cutoff_iii(float(params.pop("a", a)), float(params.pop("b", b)))
    raise ValueError(f"unknown functional {name!r}; choose one of {BUILTIN_NAMES}")


# ---------------------------------------------------------------------------
# cutoff wrapper and derivative bounds
# ---------------------------------------------------------------------------

def _bump_factors(lo_zero, lo_one, hi_one, hi_zero):
    """C^2 bump: 0 below lo_zero and above hi_zero, 1 on [lo_one, hi_one]."""
    wl = lo_one - lo_zero
    wr = hi_zero - hi_one

    def eta(x):
        return smoothstep((x - lo_zero) / wl) * smoothstep((hi_zero - x) / wr)

    def deta(x):
        return (smoothstep_d1((x - lo_zero) / wl) / wl * smoothstep((hi_zero - x) / wr)
                - smoothstep((x - lo_zero) / wl) * smoothstep_d1((hi_zero - x) / wr) / wr)

    def d2eta(x):
        sl = smoothstep((x - lo_zero) / wl)
        sr = smoothstep((hi_zero - x) / wr)
        dl = smoothstep_d1((x - lo_zero) / wl) / wl
        dr = -smoothstep_d1((hi_zero - x) / wr) / wr
        d2l = smoothstep_d2((x - lo_zero) / wl) / wl ** 2
        d2r = smoothstep_d2((hi_zero - x) / wr) / wr ** 2
        return d2l * sr + 2.0 * dl * dr + sl * d2r

    return eta, deta, d2eta


def apply_cutoff(spec: FunctionalSpec, a: float, b: float) -> FunctionalSpec:
    """Multiply G by a C^2 bump equal to 1 on [a,b] x [-C(b), C(b)].

    The bump vanishes outside [a/2, 2b] x [-2C(b), 2C(b)] with C(b) = 2*pi*b,
    so the wrapped integrand coincides with G on the band the constraints
    confine feasible shapes to.  Partials follow by the product rule.
    """
    if not (0.0 < a < b):
        raise ValueError(f"need 0 < a < b, got a={a}, b={b}")
    cb = TWO_PI * b
    eu, deu, d2eu = _bump_factors(0.5 * a, a, b, 2.0 * b)
    ep_half, dep_half, d2ep_half = _bump_factors(-2.0 * cb, -cb, cb, 2.0 * cb)

    def G(t, u, p):
        return eu(u) * ep_half(p) * spec.eval(t, u, p)

    def Gu(t, u, p):
        e = eu(u) * ep_half(p)
        return deu(u) * ep_half(p) * spec.eval(t, u, p) + e * spec.g_u(t, u, p)

    def Gp(t, u, p):
        e = eu(u) * ep_half(p)
        return eu(u) * dep_half(p) * spec.eval(t, u, p) + e * spec.g_p(t, u, p)

    def Guu(t, u, p):
        ep = ep_half(p)
        return (d2eu(u) * ep * spec.eval(t, u, p)
                + 2.0 * deu(u) * ep * spec.g_u(t, u, p)
                + eu(u) * ep * spec.g_uu(t, u, p))

    def Gup(t, u, p):
        return (deu(u) * dep_half(p) * spec.eval(t, u, p)
                + deu(u) * ep_half(p) * spec.g_p(t, u, p)
                + eu(u) * dep_half(p) * spec.g_u(t, u, p)
                + eu(u) * ep_half(p) * spec.g_up(t, u, p))

    def Gpp(t, u, p):
        e_u = eu(u)
        return (e_u * d2ep_half(p) * spec.eval(t, u, p)
                + 2.0 * e_u * dep_half(p) * spec.g_p(t, u, p)
                + e_u * ep_half(p) * spec.g_pp(t, u, p))

    return FunctionalSpec(
        name=spec.name + "+cutoff",
        params={**spec.params, "cutoff_a": a, "cutoff_b": b},
        eval=G, g_u=Gu, g_p=Gp, g_uu=Guu, g_up=Gup, g_pp=Gpp,
        even_in_p=spec.even_in_p, theta_independent=spec.theta_independent,
    )


def derivative_bounds(spec: FunctionalSpec, a: float, b: float,
                      samples: int = 128) -> DerivativeBounds:
    """Sampled second-derivative bounds over T x [a,b] x [-2*pi*b, 2*pi*b].

    k_uu and k_up are sampled sups of |G_uu|, |G_up|; k_pp is the sampled
    inf of |G_pp|, reported positive only if G_pp is negative on the whole
    box (otherwise the integrand is flagged not strongly concave there and
    the corner-count bound is unavailable).
    """
    if samples < 64:
        raise ValueError("need at least 64 samples per axis")
    cb = TWO_PI * b
    uu = np.linspace(a, b, samples)
    pp = np.linspace(-cb, cb, samples)
    thetas = np.array([0.0]) if spec.theta_independent else np.linspace(0.0, TWO_PI, 65)[:-1]
    k_uu = k_up = 0.0
    gpp_max = -np.inf
    gpp_absmin = np.inf
    for t in thetas:
        tg, ug, pg = np.broadcast_arrays(t, uu[:, None], pp[None, :])
        k_uu = max(k_uu, float(np.abs(spec.g_uu(tg, ug, pg)).max()))
        k_up = max(k_up, float(np.abs(spec.g_up(tg, ug, pg)).max()))
        gpp = np.asarray(spec.g_pp(tg, ug, pg), dtype=float)
        gpp_max = max(gpp_max, float(gpp.max()))
        gpp_absmin = min(gpp_absmin, float(np.abs(gpp).min()))
    concave = gpp_max < 0.0
    k_pp = gpp_absmin if concave else -gpp_max
    return DerivativeBounds(k_uu, k_up, k_pp, cb, concave, samples)


def path_concavity(spec: FunctionalSpec, u: RadialFunction) -> float:
    """inf |G_pp| along the solution path (the sharper constant the estimates use).

    Returns the signed sup of G_pp negated, i.e. positive when G_pp < 0 at
    every quadrature midpoint of u.
    """
    theta, ubar, p = _midpoint_data(u)
    return -float(np.max(spec.g_pp(theta, ubar, p)))
