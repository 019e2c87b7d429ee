"""Problem descriptions: constraint regime, grid size and solver options."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .functionals import FunctionalSpec, apply_cutoff
from .periodic import RadialFunction, make_grid


@dataclass(frozen=True)
class AnnulusRegime:
    """Box constraint a <= u <= b (boundary inside the annulus 1/b <= r <= 1/a)."""

    a: float
    b: float
    kind: str = field(default="annulus", init=False)

    def __post_init__(self):
        if not (0.0 < self.a < self.b):
            raise ValueError(f"need 0 < a < b, got a={self.a}, b={self.b}")


@dataclass(frozen=True)
class VolumeRegime:
    """Equality constraint on the enclosed area, with a safeguard box on u.

    The continuous problem can lack minimizers (degenerating slabs of fixed
    area); the box keeps every run well posed and its activity is reported.
    """

    m0: float
    box: tuple = None
    kind: str = field(default="volume", init=False)

    def __post_init__(self):
        if self.m0 <= 0.0:
            raise ValueError(f"need m0 > 0, got {self.m0}")
        if self.box is None:
            k = np.sqrt(np.pi / self.m0)
            object.__setattr__(self, "box", (0.05 * k, 20.0 * k))
        lo, hi = self.box
        if not (0.0 < lo < hi):
            raise ValueError(f"invalid safeguard box {self.box}")


@dataclass(frozen=True)
class ProblemSpec:
    functional: FunctionalSpec
    grid_n: int
    regime: AnnulusRegime | VolumeRegime
    use_cutoff: bool = None

    def __post_init__(self):
        make_grid(self.grid_n)
        if self.use_cutoff is None:
            object.__setattr__(self, "use_cutoff", self.regime.kind == "annulus")

    def effective_functional(self) -> FunctionalSpec:
        """The functional actually minimized (cutoff-wrapped when enabled).

        The cutoff multiplies G by a C^2 bump equal to 1 on the window the
        constraints confine (u, u') to, so it never changes the optimizers;
        it only keeps evaluations finite far outside the feasible band.
        """
        if not self.use_cutoff:
            return self.functional
        if self.regime.kind == "annulus":
            a, b = self.regime.a, self.regime.b
        else:
            a, b = self.regime.box
        return apply_cutoff(self.functional, a, b)

    def initial_point(self, seed=None, scale: float = 0.0) -> RadialFunction:
        """Constant feasible start, optionally with a smooth seeded perturbation.

        The perturbation is a low-frequency trigonometric polynomial with
        coefficients drawn from the seed, so the same seed produces the same
        underlying function at every grid size.
        """
        grid = make_grid(self.grid_n)
        if self.regime.kind == "annulus":
            c = 0.5 * (self.regime.a + self.regime.b)
            amp = self.regime.b - self.regime.a
        else:
            c = np.sqrt(np.pi / self.regime.m0)
            amp = c
        vals = np.full(grid.n_points, c)
        if seed is not None and scale > 0.0:
            rng = np.random.default_rng(seed)
            theta = grid.nodes
            for k in range(1, 7):
                ak, bk = rng.normal(size=2) / k
                vals += scale * amp * 0.05 * (ak * np.cos(k * theta) + bk * np.sin(k * theta))
        return RadialFunction(grid, np.clip(vals, 0.25 * c, 4.0 * c))

    def with_grid(self, n: int) -> "ProblemSpec":
        return replace(self, grid_n=int(n))
