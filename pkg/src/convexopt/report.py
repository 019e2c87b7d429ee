"""Text report and matplotlib figure rendering for solve results."""

from __future__ import annotations

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .geometry import boundary_points, structure_to_dict  # noqa: E402
from .periodic import convexity_measure  # noqa: E402


def describe_verdict(structure, u) -> str:
    """Verdict string with a geometric hint for the degenerate cases."""
    v = structure.verdict
    vals = u.values
    if v == "HasArcs" and float(vals.max() - vals.min()) <= 1e-6 * max(1.0, vals.mean()):
        return f"{v} (circle u={vals.mean():.6g})"
    return v


def text_report(result, structure, problem) -> str:
    cert = result.certificate
    lines = [
        f"status:            {result.status}",
        f"objective:         {result.objective:.12g}",
        f"outer iterations:  {result.iterations}",
        f"kkt residual:      {result.kkt_residual_final:.3e}",
        f"verdict:           {describe_verdict(structure, result.u_star)}",
        f"corners:           {structure.n_corners}",
    ]
    for theta, mass in structure.corners:
        lines.append(f"    theta={theta:.6f}  mass={mass:.6f}")
    if cert is not None:
        lines.append(f"complementarity:   zeta {cert.comp_zeta:.2e}"
                     f"  a {cert.comp_a:.2e}  b {cert.comp_b:.2e}")
        if cert.regime == "volume":
            lines.append(f"area multiplier:   {cert.mu:.6g}")
    if result.message:
        lines.append(f"note:              {result.message}")
    return "\n".join(lines) + "\n"


def render_figure(result, structure, problem, path) -> None:
    """Four-panel summary figure (shape, profile, masses, convergence)."""
    u = result.u_star
    theta = u.grid.nodes
    nu = convexity_measure(u).masses
    if problem.regime.kind == "annulus":
        a, b = problem.regime.a, problem.regime.b
    else:
        a, b = problem.regime.box

    fig, axes = plt.subplots(2, 2, figsize=(9, 8))

    ax = axes[0, 0]
    pts = boundary_points(u)
    closed = np.vstack([pts, pts[:1]])
    ax.plot(closed[:, 0], closed[:, 1], "-", color="#1f4e9c", lw=1.5)
    circle_t = np.linspace(0, 2 * np.pi, 200)
    for r, ls in ((1.0 / a, "--"), (1.0 / b, ":")):
        ax.plot(r * np.cos(circle_t), r * np.sin(circle_t), ls, color="0.6", lw=0.8)
    for th, _m in structure.corners:
        idx = int(round(th / u.grid.spacing)) % u.grid.n_points
        r = 1.0 / u.values[idx]
        ax.plot(r * np.cos(th), r * np.sin(th), "o", color="#c23b22", ms=4)
    ax.set_aspect("equal")
    ax.set_title(f"shape ({describe_verdict(structure, u)})")

    ax = axes[0, 1]
    ax.plot(theta, u.values, color="#1f4e9c", lw=1.0)
    ax.axhline(a, color="0.6", ls="--", lw=0.8)
    ax.axhline(b, color="0.6", ls=":", lw=0.8)
    ax.set_xlabel("theta")
    ax.set_ylabel("u")
    ax.set_title("radial profile")

    ax = axes[1, 0]
    ax.semilogy(theta, np.maximum(nu, 1e-16), ".", ms=2.5, color="#444")
    ax.set_xlabel("theta")
    ax.set_ylabel("cell mass")
    ax.set_title("curvature masses")

    ax = axes[1, 1]
    if result.history:
        hist = np.array([(s, o, r) for s, o, r in result.history])
        ax.semilogy(hist[:, 0], label="barrier sigma")
        ax.semilogy(np.abs(hist[:, 2]) + 1e-18, label="stationarity")
        ax2 = ax.twinx()
        ax2.plot(hist[:, 1], color="#c23b22", lw=0.9, label="objective")
        ax2.set_ylabel("objective", color="#c23b22")
        ax.legend(loc="upper right", fontsize=8)
    ax.set_xlabel("outer iteration")
    ax.set_title("continuation history")

    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def records_table(records) -> str:
    """Fixed-width pass/fail table for suite records."""
    width = max((len(r.name) for r in records), default=10) + 2
    lines = []
    for r in records:
        mark = "PASS" if r.passed else "FAIL"
        lines.append(f"[{mark}] {r.name:<{width}} {r.detail}")
    n_fail = sum(1 for r in records if not r.passed)
    lines.append(f"{len(records) - n_fail}/{len(records)} checks passed")
    return "\n".join(lines) + "\n"
