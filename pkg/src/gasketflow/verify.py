"""Property-check harness for the finite-level inequalities and the flow.

Every check is a pure function of its configuration (seed included), emits
a small report, and never raises on a mathematical violation; violations
are counted and the worst relative slack is recorded.  The flow checks can
fan out over threads; GASKETFLOW_THREADS caps the worker count.
"""

from __future__ import annotations

import math
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .energy import EnergyForm, batch_energy
from .flow import FlowConfig, evolve
from .gasket import VertexFunction, build_level
from .measure import MeasureWeights, vertex_measure
from .robin import (
    AbsoluteValue,
    BoxIndicator,
    DirichletIndicator,
    PiecewiseLinearQuadratic,
    Power,
    Quadratic,
    RobinSpec,
    Zero,
    batch_perturbed_energy,
    dominates_condition,
    perturbed_energy,
)

INF = math.inf


@dataclass(frozen=True)
class SampleConfig:
    """Sampling plan shared by the randomized checks."""

    seed: int = 0
    sample_count: int = 1000
    value_range: float = 1.0
    levels: tuple[int, ...] = (1, 2, 3)
    n_values: tuple[int, ...] = (3,)

    def __post_init__(self):
        if self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")
        if self.value_range <= 0:
            raise ValueError("value_range must be positive")


@dataclass
class CheckReport:
    property: str
    samples: int
    violations: int
    max_slack: float
    seed: int

    def to_dict(self) -> dict:
        return {
            "property": self.property,
            "samples": self.samples,
            "violations": self.violations,
            "max_slack": self.max_slack,
            "seed": self.seed,
        }


REL_TOL = 1e-12


def _stable_hash(name: str) -> int:
    """Process-independent small hash for seeding per-case generators."""
    return zlib.crc32(name.encode("utf-8")) & 0xFFFF


def _relative_slack(lhs: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Signed slack of 'lhs <= rhs' scaled by the larger magnitude.

    Infinite right sides always pass (anything <= inf, including inf);
    an infinite left side against a finite right side is an infinite
    violation.
    """
    lhs, rhs = np.broadcast_arrays(
        np.asarray(lhs, dtype=np.float64), np.asarray(rhs, dtype=np.float64)
    )
    out = np.full(lhs.shape, -INF)
    finite = np.isfinite(lhs) & np.isfinite(rhs)
    scale = np.maximum(1.0, np.maximum(np.abs(lhs[finite]), np.abs(rhs[finite])))
    out[finite] = (lhs[finite] - rhs[finite]) / scale
    out[np.isinf(lhs) & (lhs > 0) & np.isfinite(rhs)] = INF
    return out


def _report(name: str, slack: np.ndarray, seed: int, tol: float = REL_TOL) -> CheckReport:
    slack = np.atleast_1d(slack)
    return CheckReport(
        property=name,
        samples=int(slack.size),
        violations=int(np.sum(slack > tol)),
        max_slack=float(np.max(slack)),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# scalar inequalities


def _clamped_pair(a, b, alpha):
    low = 0.5 * (a + b - alpha)
    high = 0.5 * (a + b + alpha)
    first = np.minimum(np.maximum(a, low), high)
    second = np.maximum(np.minimum(b, high), low)
    return first, second


def _envelope_pair(a, b):
    low = np.minimum(np.abs(a), b) * np.sign(a)
    high = np.maximum(np.abs(a), b)
    return low, high


def check_scalar_inequalities(cfg: SampleConfig) -> list[CheckReport]:
    """Sampled check of the two scalar inequalities behind the flow theory.

    Clamp contraction: replacing (a_i, b_i) by the pair clamped between the
    midpoints (a_i+b_i -+ alpha)/2 does not increase the sum of squared
    differences.  Envelope domination: for b_i >= 0, the pair
    (min(|a_i|, b_i) sgn a_i, max(|a_i|, b_i)) does not either.
    """
    rng = np.random.default_rng(cfg.seed)
    k = cfg.sample_count
    r = cfg.value_range
    a1, a2, b1, b2 = rng.uniform(-r, r, size=(4, k))
    alpha = rng.uniform(0.0, 2.0 * r, size=k)
    alpha[alpha == 0.0] = 1e-9

    f1, s1 = _clamped_pair(a1, b1, alpha)
    f2, s2 = _clamped_pair(a2, b2, alpha)
    lhs = (f1 - f2) ** 2 + (s1 - s2) ** 2
    rhs = (a1 - a2) ** 2 + (b1 - b2) ** 2
    clamp = _report("scalar_clamp_contraction", _relative_slack(lhs, rhs), cfg.seed)

    nb1, nb2 = np.abs(b1), np.abs(b2)
    c1, d1 = _envelope_pair(a1, nb1)
    c2, d2 = _envelope_pair(a2, nb2)
    lhs = (c1 - c2) ** 2 + (d1 - d2) ** 2
    rhs = (a1 - a2) ** 2 + (nb1 - nb2) ** 2
    envelope = _report("scalar_envelope_domination", _relative_slack(lhs, rhs), cfg.seed)
    return [clamp, envelope]


# ---------------------------------------------------------------------------
# energy inequalities at a fixed level


def _sample_matrix(rng, count, width, value_range):
    return rng.uniform(-value_range, value_range, size=(count, width))


def check_energy_inequalities(form: EnergyForm, cfg: SampleConfig) -> list[CheckReport]:
    """Level-m clamp-contraction and envelope-domination energy inequalities."""
    rng = np.random.default_rng(cfg.seed)
    k = cfg.sample_count
    nv = form.graph.vertex_count
    u = _sample_matrix(rng, k, nv, cfg.value_range)
    v = _sample_matrix(rng, k, nv, cfg.value_range)
    alpha = rng.uniform(0.0, 2.0 * cfg.value_range, size=(k, 1))
    alpha[alpha == 0.0] = 1e-9

    low = 0.5 * (u + v - alpha)
    high = 0.5 * (u + v + alpha)
    first = np.minimum(np.maximum(u, low), high)
    second = np.maximum(np.minimum(v, high), low)
    lhs = batch_energy(form, first) + batch_energy(form, second)
    rhs = batch_energy(form, u) + batch_energy(form, v)
    tag = f"[n={form.graph.n},m={form.graph.level}]"
    clamp = _report(
        "energy_clamp_contraction" + tag, _relative_slack(lhs, rhs), cfg.seed
    )

    w = np.abs(v)
    low = np.minimum(np.abs(u), w) * np.sign(u)
    high = np.maximum(np.abs(u), w)
    lhs = batch_energy(form, low) + batch_energy(form, high)
    rhs = batch_energy(form, u) + batch_energy(form, w)
    envelope = _report(
        "energy_envelope_domination" + tag, _relative_slack(lhs, rhs), cfg.seed
    )
    return [clamp, envelope]


# ---------------------------------------------------------------------------
# perturbed-energy functional criteria


def builtin_specs(n: int) -> dict[str, RobinSpec]:
    """The canonical convex specs used across suites and tests."""
    cycle = [Quadratic(1.0), Zero(), DirichletIndicator()]
    mixed = RobinSpec(tuple(cycle[i % 3] for i in range(n)))
    return {
        "neumann": RobinSpec.neumann(n),
        "dirichlet": RobinSpec.dirichlet(n),
        "quadratic": RobinSpec.uniform(Quadratic(1.0), n),
        "absolute_value": RobinSpec.uniform(AbsoluteValue(1.0), n),
        "power": RobinSpec.uniform(Power(1.0, 3.0), n),
        "box": RobinSpec.uniform(BoxIndicator(-0.5, 0.75), n),
        "plq": RobinSpec.uniform(
            PiecewiseLinearQuadratic(0.5, ((0.5, 1.0),)), n
        ),
        "mixed": mixed,
    }


def _with_feasible_boundary(values: np.ndarray, spec: RobinSpec, graph, rng) -> np.ndarray:
    """Zero out boundary columns under pinned functionals for some samples
    so the finite branches of indicator kinds are exercised too."""
    out = values.copy()
    for b, idx in zip(spec.functionals, graph.boundary):
        if isinstance(b, DirichletIndicator):
            feasible = rng.random(values.shape[0]) < 0.5
            out[feasible, idx] = 0.0
    return out


def check_perturbed_criteria(
    form: EnergyForm, specs: dict[str, RobinSpec], cfg: SampleConfig
) -> list[CheckReport]:
    """Functional criteria behind order preservation, positivity, sup-norm
    contraction and domination, checked directly on sampled pairs."""
    reports = []
    graph = form.graph
    nv = graph.vertex_count
    dirichlet = RobinSpec.dirichlet(graph.n)
    for name, spec in sorted(specs.items()):
        rng = np.random.default_rng((cfg.seed, _stable_hash(name)))
        k = cfg.sample_count
        u = _with_feasible_boundary(
            _sample_matrix(rng, k, nv, cfg.value_range), spec, graph, rng
        )
        v = _with_feasible_boundary(
            _sample_matrix(rng, k, nv, cfg.value_range), spec, graph, rng
        )

        wb_u = batch_perturbed_energy(form, spec, u)
        wb_v = batch_perturbed_energy(form, spec, v)
        lhs = batch_perturbed_energy(form, spec, np.minimum(u, v)) + batch_perturbed_energy(
            form, spec, np.maximum(u, v)
        )
        reports.append(
            _report(f"submodularity[{name}]", _relative_slack(lhs, wb_u + wb_v), cfg.seed)
        )

        lhs = batch_perturbed_energy(form, spec, np.maximum(u, 0.0))
        reports.append(
            _report(f"positive_part[{name}]", _relative_slack(lhs, wb_u), cfg.seed)
        )

        if spec.convex:
            alpha = rng.uniform(0.0, 2.0 * cfg.value_range, size=(k, 1))
            alpha[alpha == 0.0] = 1e-9
            low = 0.5 * (u + v - alpha)
            high = 0.5 * (u + v + alpha)
            first = np.minimum(np.maximum(u, low), high)
            second = np.maximum(np.minimum(v, high), low)
            lhs = batch_perturbed_energy(form, spec, first) + batch_perturbed_energy(
                form, spec, second
            )
            reports.append(
                _report(f"sup_clamp[{name}]", _relative_slack(lhs, wb_u + wb_v), cfg.seed)
            )

        if dominates_condition(dirichlet, spec):
            w = np.abs(v)
            u_feas = u.copy()
            u_feas[:, list(graph.boundary)] = 0.0  # inside the pinned domain
            low = np.minimum(np.abs(u_feas), w) * np.sign(u_feas)
            high = np.maximum(np.abs(u_feas), w)
            lhs = batch_perturbed_energy(form, dirichlet, low) + batch_perturbed_energy(
                form, spec, high
            )
            rhs = batch_perturbed_energy(form, dirichlet, u_feas) + batch_perturbed_energy(
                form, spec, w
            )
            reports.append(
                _report(
                    f"envelope_domination[dirichlet|{name}]",
                    _relative_slack(lhs, rhs),
                    cfg.seed,
                )
            )
    return reports


# ---------------------------------------------------------------------------
# locality


def _exact_energy(form: EnergyForm, values: np.ndarray) -> Fraction:
    """Energy in exact rational arithmetic (floats are exact binary rationals)."""
    g = form.graph
    r = Fraction(g.n + 2, g.n) ** g.level
    total = Fraction(0)
    for a, b in g.edges:
        d = Fraction(float(values[a])) - Fraction(float(values[b]))
        total += d * d
    return r * total


def _subtree_masks(graph, rng) -> tuple[np.ndarray, np.ndarray]:
    """Characteristic vectors of two cell families with no joining edge.

    Two distinct word prefixes select two subtrees; a vertex belongs to a
    family only if every cell containing it lies in that family, so no
    shared corner and no edge can cross between the supports.
    """
    depth = 1 if graph.level < 2 else int(rng.integers(1, 3))
    prefixes = set()
    while len(prefixes) < 2:
        prefixes.add(tuple(rng.integers(0, graph.n, size=depth).tolist()))
    first, second = sorted(prefixes)
    owners: list[set] = [set() for _ in range(graph.vertex_count)]
    for word, cell in zip(graph.cell_words, graph.cells):
        for v in cell:
            owners[v].add(word[:depth])
    mask_a = np.array([o == {first} for o in owners])
    mask_b = np.array([o == {second} for o in owners])
    return mask_a, mask_b


def check_locality(
    form: EnergyForm, spec: RobinSpec, cfg: SampleConfig, name: str = ""
) -> CheckReport:
    """Additivity of the perturbed energy on disjointly supported pairs.

    The energy part is compared in exact rational arithmetic (zero
    tolerance); the boundary parts cancel exactly because at most one of
    the two summands is nonzero at each boundary vertex.  The float API is
    additionally required to agree to 1e-12 relative.
    """
    graph = form.graph
    rng = np.random.default_rng(cfg.seed)
    violations = 0
    worst = -INF
    for _ in range(cfg.sample_count):
        mask_a, mask_b = _subtree_masks(graph, rng)
        u = rng.uniform(-cfg.value_range, cfg.value_range, graph.vertex_count) * mask_a
        v = rng.uniform(-cfg.value_range, cfg.value_range, graph.vertex_count) * mask_b
        total = u + v
        exact_ok = _exact_energy(form, total) == _exact_energy(form, u) + _exact_energy(
            form, v
        )
        penalties_ok = True
        for b, idx in zip(spec.functionals, graph.boundary):
            lhs_b = float(b(float(total[idx])))
            rhs_b = float(b(float(u[idx]))) + float(b(float(v[idx])))
            if not (lhs_b == rhs_b or (math.isinf(lhs_b) and math.isinf(rhs_b))):
                penalties_ok = False
        lhs = perturbed_energy(form, spec, VertexFunction(graph, total))
        rhs = perturbed_energy(form, spec, VertexFunction(graph, u)) + perturbed_energy(
            form, spec, VertexFunction(graph, v)
        )
        if math.isinf(lhs) or math.isinf(rhs):
            float_slack = -INF if (math.isinf(lhs) and math.isinf(rhs)) else INF
        else:
            float_slack = abs(lhs - rhs) / max(1.0, abs(lhs), abs(rhs))
        worst = max(worst, float_slack)
        if not (exact_ok and penalties_ok and float_slack <= REL_TOL):
            violations += 1
    label = f"locality[{name}]" if name else "locality"
    return CheckReport(label, cfg.sample_count, violations, worst, cfg.seed)


# ---------------------------------------------------------------------------
# flow properties


def _worker_count() -> int:
    try:
        return max(1, int(os.environ.get("GASKETFLOW_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class FlowCheckConfig:
    """Ensemble description for the trajectory-level checks."""

    seed: int = 0
    n: int = 3
    level: int = 3
    pairs: int = 5
    tau: float = 0.05
    t_end: float = 1.0
    tol: float = 1e-9
    value_range: float = 1.0

    @property
    def violation_tol(self) -> float:
        return 10.0 * self.tol


def check_flow_properties(
    cfg: FlowCheckConfig, specs: dict[str, RobinSpec] | None = None
) -> list[CheckReport]:
    """Trajectory-level invariants: positivity, order preservation, sup and
    weighted-L2 contraction, energy decay, Neumann mean conservation, and
    the domination sandwich between the Neumann and pinned-boundary flows."""
    graph = build_level(cfg.n, cfg.level)
    form = EnergyForm(graph)
    measure = vertex_measure(graph, MeasureWeights.uniform(cfg.n))
    if specs is None:
        specs = builtin_specs(cfg.n)
    config = FlowConfig(tau=cfg.tau, t_end=cfg.t_end, tol=cfg.tol)
    neumann = RobinSpec.neumann(cfg.n)
    dirichlet = RobinSpec.dirichlet(cfg.n)

    def run(values, spec):
        return evolve(
            form, measure, spec, VertexFunction(graph, values), config
        ).values_matrix()

    cases = []
    for name, spec in sorted(specs.items()):
        for pair in range(cfg.pairs):
            cases.append((name, spec, pair))

    def evaluate(case):
        name, spec, pair = case
        rng = np.random.default_rng((cfg.seed, _stable_hash(name), pair))
        nv = graph.vertex_count
        u0 = rng.uniform(-cfg.value_range, cfg.value_range, nv)
        v0 = rng.uniform(-cfg.value_range, cfg.value_range, nv)
        gap = np.abs(rng.uniform(-cfg.value_range, cfg.value_range, nv))

        out = {}
        su = run(u0, spec)
        sv = run(v0, spec)
        s_abs = run(np.abs(u0), spec)
        s_above = run(u0 + gap, spec)
        out["positivity"] = max(0.0, -float(s_abs.min()))
        out["order_preservation"] = float(np.max(su - s_above))
        sup_d = np.max(np.abs(su - sv), axis=1)
        out["sup_contraction"] = float(np.max(np.diff(sup_d)))
        l2_d = np.sqrt(((su - sv) ** 2 * measure.masses).sum(axis=1))
        out["l2_contraction"] = float(np.max(np.diff(l2_d)))
        energies = [
            perturbed_energy(form, spec, VertexFunction(graph, row)) for row in su
        ]
        decay = -INF
        for prev, nxt in zip(energies, energies[1:]):
            if math.isfinite(prev):
                decay = max(decay, nxt - prev)
        out["energy_decay"] = decay

        # |u0| <= dominating, so the sandwich compares these trajectories
        dominating = np.abs(u0) + gap
        s_dom = run(dominating, spec)
        s_neu = run(dominating, neumann)
        out["domination_by_neumann"] = float(np.max(np.abs(su) - s_neu))
        s_dir = run(u0, dirichlet)
        out["domination_of_dirichlet"] = float(np.max(np.abs(s_dir) - s_dom))

        if name == "neumann":
            means = (su * measure.masses).sum(axis=1)
            out["mean_conservation"] = float(np.max(np.abs(means - means[0])))
        return out

    workers = _worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(evaluate, cases))
    else:
        results = [evaluate(case) for case in cases]

    properties: dict[str, list[float]] = {}
    for res in results:
        for key, value in res.items():
            properties.setdefault(key, []).append(value)

    reports = []
    for key in sorted(properties):
        vals = np.array(properties[key])
        reports.append(
            CheckReport(
                property=key,
                samples=int(vals.size),
                violations=int(np.sum(vals > cfg.violation_tol)),
                max_slack=float(np.max(vals)),
                seed=cfg.seed,
            )
        )
    return reports


# ---------------------------------------------------------------------------
# suites


def run_suite(name: str, seed: int = 0, sample_count: int | None = None) -> dict:
    """Run one named suite and return its JSON-ready report."""
    reports: list[CheckReport] = []
    if name == "scalar":
        cfg = SampleConfig(seed=seed, sample_count=sample_count or 100_000)
        reports = check_scalar_inequalities(cfg)
    elif name == "energy":
        plan = SampleConfig(seed=seed, sample_count=sample_count or 1000)
        for n in plan.n_values:
            for m in plan.levels:
                cfg = SampleConfig(seed=seed + m, sample_count=plan.sample_count)
                reports.extend(
                    check_energy_inequalities(EnergyForm(build_level(n, m)), cfg)
                )
    elif name == "perturbed":
        cfg = SampleConfig(seed=seed, sample_count=sample_count or 1000)
        reports = check_perturbed_criteria(
            EnergyForm(build_level(3, 2)), builtin_specs(3), cfg
        )
    elif name == "locality":
        form = EnergyForm(build_level(3, 2))
        cfg = SampleConfig(seed=seed, sample_count=sample_count or 100)
        for spec_name in ("neumann", "dirichlet", "quadratic", "mixed"):
            reports.append(
                check_locality(form, builtin_specs(3)[spec_name], cfg, spec_name)
            )
    elif name == "flow":
        cfg = FlowCheckConfig(seed=seed, level=2, pairs=sample_count or 3, t_end=0.5, tau=0.1)
        reports = check_flow_properties(cfg)
    else:
        raise ValueError(f"unknown suite {name!r}")
    return {
        "suite": name,
        "seed": seed,
        "reports": [r.to_dict() for r in reports],
        "violations": int(sum(r.violations for r in reports)),
    }


SUITE_NAMES = ("scalar", "energy", "perturbed", "locality", "flow")
