"""Brute-force checks of the DS decompositions on small random instances.

For each instance every subset is tabulated, then the battery checks the
identity g - h = F_hat, submodularity of all four parts, supermodularity of
the reward sum, the beta' diagnostic and modular bound dominance/tightness.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .constraint_space import ConstraintSet, GroundSet
from .ds_decompose import (
    DsDecomposition,
    decompose_dc,
    decompose_sa,
    default_order,
    modular_lower_bound,
    modular_upper_bound,
    surrogate_function,
)
from .objective import ObjectiveContext
from .setfunc_oracle import (
    ViolationReport,
    all_masks,
    library_tables,
    submodularity_violations,
    supermodularity_violations,
)

IDENTITY_TOL = 1e-9
BATCH_SIZES = (1, 5, 50)


def random_instance(rng: np.random.Generator, max_sites: int = 3, max_symbols: int = 4,
                    batch_sizes=BATCH_SIZES) -> ObjectiveContext:
    """Random ground set and rewards; a random fraction of items gets zero reward."""
    n_sites = int(rng.integers(1, max_sites + 1))
    sizes = rng.integers(1, max_symbols + 1, size=n_sites)
    ground = GroundSet(tuple(tuple(f"{chr(65 + c)}" for c in range(k)) for k in sizes))
    rho = rng.random(ground.library_size)
    rho[rng.random(rho.size) < rng.random()] = 0.0
    return ObjectiveContext(ground, rho, int(rng.choice(batch_sizes)))


def mask_bits(n_bits: int) -> np.ndarray:
    """Row m holds the membership indicator of mask m."""
    masks = all_masks(n_bits)
    return ((masks[:, None] >> np.arange(n_bits)[None, :]) & 1).astype(bool)


def modular_table(m, n_bits: int) -> np.ndarray:
    return m.offset + mask_bits(n_bits).astype(float) @ m.weights


def identity_residuals(ds: DsDecomposition, f_table: np.ndarray, fault: float = 0.0) -> np.ndarray:
    """|g - h - F_hat| scaled by max(1, |F_hat|) on every subset."""
    resid = np.abs(ds.g.table() + fault - ds.h.table() - f_table)
    return resid / np.maximum(1.0, np.abs(f_table))


def local_violation_counts(values, n_bits: int, tol: float = IDENTITY_TOL) -> np.ndarray:
    """Per base mask S: number of pairs (j, k) outside S where Delta(j|S) < Delta(j|S+k)."""
    masks = all_masks(n_bits)
    counts = np.zeros(masks.size, dtype=np.int64)
    for j in range(n_bits):
        bj = 1 << j
        for k in range(n_bits):
            if k == j:
                continue
            bk = 1 << k
            base = masks[(masks & (bj | bk)) == 0]
            excess = (values[base | bj | bk] - values[base | bk]) - (values[base | bj] - values[base])
            np.add.at(counts, base[excess > tol], 1)
    return counts


@dataclass
class CheckResult:
    name: str
    mandatory: bool
    checked: int = 0
    violations: int = 0
    worst: float = 0.0

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def add(self, checked: int, violations: int, worst: float = 0.0):
        self.checked += int(checked)
        self.violations += int(violations)
        self.worst = max(self.worst, float(worst))

    def add_report(self, rep: ViolationReport):
        self.add(rep.checked, rep.violations, rep.worst)


@dataclass
class BatteryResult:
    checks: dict[str, CheckResult] = field(default_factory=dict)
    instances: int = 0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values() if c.mandatory)

    def check(self, name: str, mandatory: bool = True) -> CheckResult:
        if name not in self.checks:
            self.checks[name] = CheckResult(name, mandatory)
        return self.checks[name]

    def format_table(self) -> str:
        lines = [f"{'check':<34} {'kind':<10} {'checked':>10} {'violations':>10} {'worst':>10}  result"]
        for c in self.checks.values():
            status = "PASS" if c.passed else ("FAIL" if c.mandatory else "WARN")
            kind = "mandatory" if c.mandatory else "diagnostic"
            lines.append(f"{c.name:<34} {kind:<10} {c.checked:>10d} {c.violations:>10d} {c.worst:>10.3g}  {status}")
        lines.append(f"instances: {self.instances}  overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def _check_bounds(result: BatteryResult, ds: DsDecomposition, X: ConstraintSet, n_bits: int, tag: str):
    h_tab, g_tab = ds.h.table(), ds.g.table()
    for variant in ("grow", "shrink"):
        up = modular_table(modular_upper_bound(ds.h, X, variant), n_bits)
        gap = h_tab - up
        result.check(f"{tag} upper bound dominates h").add(gap.size, (gap > IDENTITY_TOL).sum(), gap.max(initial=0.0))
        miss = abs(up[X.mask] - h_tab[X.mask])
        result.check(f"{tag} upper bound tight at X").add(1, miss > IDENTITY_TOL, miss)
    low = modular_table(modular_lower_bound(ds.g, X, default_order(ds.g, X, ds.h)), n_bits)
    gap = low - g_tab
    result.check(f"{tag} lower bound below g").add(gap.size, (gap > IDENTITY_TOL).sum(), gap.max(initial=0.0))
    miss = abs(low[X.mask] - g_tab[X.mask])
    result.check(f"{tag} lower bound tight at X").add(1, miss > IDENTITY_TOL, miss)


def check_instance(ctx: ObjectiveContext, result: BatteryResult, rng: np.random.Generator,
                   fault: float = 0.0, writer=None, instance: int = 0):
    n_bits = ctx.ground.total_constraints
    f_tab = surrogate_function(ctx).table()
    _, sums = library_tables(ctx.ground, ctx.rho)
    result.check("reward sum supermodular").add_report(supermodularity_violations(sums, n_bits))
    X = ConstraintSet(ctx.ground, int(rng.integers(0, 1 << n_bits)))
    for ds in (decompose_sa(ctx), decompose_dc(ctx)):
        tag = ds.construction
        resid = identity_residuals(ds, f_tab, fault)
        result.check(f"{tag} identity g - h = F_hat").add(resid.size, (resid > IDENTITY_TOL).sum(), resid.max())
        h_tab, g_tab = ds.h.table(), ds.g.table() + fault
        result.check(f"{tag} h submodular").add_report(submodularity_violations(h_tab, n_bits))
        result.check(f"{tag} g submodular").add_report(submodularity_violations(g_tab, n_bits))
        if tag == "SA" and ds.beta_exact is not None:
            bad = ds.beta_prime > ds.beta_exact + 1e-12
            result.check("SA beta' <= exact beta", mandatory=False).add(
                1, bad, max(0.0, ds.beta_prime - ds.beta_exact))
        _check_bounds(result, ds, X, n_bits, tag)
        if writer is not None:
            viol = local_violation_counts(h_tab, n_bits) + local_violation_counts(g_tab, n_bits)
            raw = g_tab - h_tab - f_tab
            for m in range(f_tab.size):
                writer.writerow([instance, tag, ctx.n, m, repr(float(f_tab[m])), repr(float(h_tab[m])),
                                 repr(float(g_tab[m])), repr(float(raw[m])), int(viol[m])])


def run_battery(n_instances: int = 20, seed: int = 0, fault: float = 0.0, dump_dir=None,
                max_sites: int = 3, max_symbols: int = 4, batch_sizes=BATCH_SIZES) -> BatteryResult:
    """Run every check on ``n_instances`` seeded random instances.

    With ``dump_dir`` set, a per-subset CSV ``decomposition_checks.csv`` is
    written there.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xD5]))
    result = BatteryResult()
    fh = writer = None
    if dump_dir is not None:
        Path(dump_dir).mkdir(parents=True, exist_ok=True)
        fh = open(Path(dump_dir) / "decomposition_checks.csv", "w", newline="", encoding="utf-8")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["instance", "construction", "n", "mask", "f_hat", "h", "g", "residual", "violations"])
    try:
        for i in range(n_instances):
            ctx = random_instance(rng, max_sites, max_symbols, batch_sizes)
            check_instance(ctx, result, rng, fault, writer, i)
            result.instances += 1
    finally:
        if fh is not None:
            fh.close()
    return result
