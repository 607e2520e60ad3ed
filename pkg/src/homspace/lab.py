"""Probe ensembles and the experiment suites.

The equivalence experiments put empirical bands around the norm-equivalence
theorems (the theorems promise finite constants, never values, so the bands
are configuration); the embedding and lemma suites split into rows that are
exact inequalities (zero violations allowed) and rows that are measured
constants compared against configured caps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .difference import lipschitz_norm, truncated_norm
from .errors import ExperimentError
from .kernels import build_semigroup, r_gamma_integral_band
from .norms import (INF, NormSpec, admissible_range, besov_norm,
                    lebesgue_norm, triebel_lizorkin_norm)
from .operators import Field, hl_maximal
from .report import SuiteReport
from .space import default_radius_grid

STANDARD_KINDS = ("bandlimited", "holder", "smoothed_indicator",
                  "gaussian_field")
STANDARD_COUNTS = {"bandlimited": 15, "holder": 10,
                   "smoothed_indicator": 10, "gaussian_field": 15}
DEGENERATE_TOL = 1e-13

DEFAULT_CAPS = {
    "ratio_max_over_min": 100.0,
    "drift": 2.0,
    "integral_band": 4.0,
    "two_sided_band": 50.0,
    "c_tilde_band": 8.0,
    "sampler_band": 2.0,
    "truncation_band": 4.0,
}


@dataclass
class EnsembleSpec:
    kinds: tuple = STANDARD_KINDS
    counts: dict = field(default_factory=lambda: dict(STANDARD_COUNTS))
    seed: int = 0
    mean_zero: bool = False

    def total(self):
        return sum(self.counts[k] for k in self.kinds)


def standard_ensemble_spec(mean_zero=False, seed=0):
    return EnsembleSpec(mean_zero=mean_zero, seed=seed)


def generate_ensemble(space, stack, spec):
    """Deterministic probe fields; mean removed when the flag is set."""
    if not spec.kinds:
        raise ExperimentError("empty ensemble kind set")
    rng = np.random.default_rng(spec.seed)
    levels = list(stack.levels())
    interior = levels[len(levels) // 3: 2 * len(levels) // 3 + 1] or levels
    mid_scale = stack.delta ** interior[len(interior) // 2]
    mollifier = build_semigroup(space, mid_scale, a=stack.a)
    fields = []
    for kind in spec.kinds:
        for i in range(spec.counts[kind]):
            if kind == "bandlimited":
                j = interior[i % len(interior)]
                v = stack.apply(j, rng.standard_normal(space.n))
            elif kind == "holder":
                theta = float(rng.uniform(0.3, 1.0))
                x0 = int(rng.integers(space.n))
                v = space.dist[x0] ** theta
            elif kind == "smoothed_indicator":
                x0 = int(rng.integers(space.n))
                qt = float(rng.uniform(0.15, 0.5))
                r = float(np.quantile(space.dist[x0], qt))
                ind = (space.dist[x0] < max(r, space.min_gap * 1.5)).astype(float)
                v = mollifier @ (space.weight * ind)
            elif kind == "gaussian_field":
                v = mollifier @ (space.weight * rng.standard_normal(space.n))
            else:
                raise ExperimentError(f"unknown ensemble kind {kind!r}")
            if spec.mean_zero:
                v = v - float(v @ space.weight) / space.total_mass
            if float(np.max(np.abs(v))) <= DEGENERATE_TOL:
                raise ExperimentError(
                    f"degenerate {kind} field at index {i}")
            fields.append(Field(space, v))
    return fields


# -- equivalence experiments ---------------------------------------------------

PAIRINGS = ("B_vs_L", "B_vs_Lb", "F_vs_Lt", "F_vs_Lt_u",
            "inhomog_B_vs_L", "inhomog_F_vs_Lt")


@dataclass
class EquivalenceReport:
    pairing: str
    spec: NormSpec
    left: list
    right: list
    ratios: list
    excluded: int
    caps: dict
    geometric_mean: float | None

    @property
    def ratio_min(self):
        return min(self.ratios) if self.ratios else math.nan

    @property
    def ratio_max(self):
        return max(self.ratios) if self.ratios else math.nan

    @property
    def ratio_median(self):
        return float(np.median(self.ratios)) if self.ratios else math.nan

    @property
    def passed(self):
        if not self.ratios:
            return False
        return (self.ratio_max / self.ratio_min
                <= self.caps["ratio_max_over_min"])

    def to_suite(self):
        rep = SuiteReport(f"equivalence {self.pairing}")
        rep.add("ratio band", "band", passed=self.passed,
                value=self.ratio_max / self.ratio_min if self.ratios else None,
                ratio_min=self.ratio_min, ratio_max=self.ratio_max,
                ratio_median=self.ratio_median,
                geometric_mean=self.geometric_mean, excluded=self.excluded,
                cap=self.caps["ratio_max_over_min"])
        for i, (l, r, t) in enumerate(zip(self.left, self.right, self.ratios)):
            rep.add(f"field {i}", "value", passed=None, value=t,
                    left=l, right=r)
        return rep


def _pairing_sides(pairing, spec, stack, cubes):
    def left(f):
        if pairing == "B_vs_L":
            return lipschitz_norm(f, spec, "Ldot")
        if pairing == "B_vs_Lb":
            return lipschitz_norm(f, spec, "Lb_dot")
        if pairing == "F_vs_Lt":
            return lipschitz_norm(f, replace(spec, u=1.0), "Lt_dot")
        if pairing == "F_vs_Lt_u":
            return lipschitz_norm(f, spec, "Lt_dot")
        if pairing == "inhomog_B_vs_L":
            return lipschitz_norm(f, spec, "L")
        return lipschitz_norm(f, spec, "Lt")

    def right(f):
        if pairing in ("B_vs_L", "B_vs_Lb", "inhomog_B_vs_L"):
            return besov_norm(f, spec, stack, cubes)
        return triebel_lizorkin_norm(f, spec, stack, cubes)

    return left, right


def check_hypotheses(pairing, spec, omega, eta, geometry=None):
    """Raise ExperimentError naming the violated theorem hypothesis."""
    if not 0 < spec.s < min(spec.beta, spec.gamma):
        raise ExperimentError(
            f"hypothesis violated: s={spec.s} outside (0, beta^gamma)")
    adm = admissible_range(spec, omega, eta)
    family = "besov" if "B_vs" in pairing else "triebel"
    for msg in adm.violations["common"] + adm.violations[family]:
        raise ExperimentError(f"hypothesis violated: {msg}")
    if pairing in ("B_vs_L", "B_vs_Lb", "inhomog_B_vs_L"):
        if spec.p < 1 and pairing != "B_vs_Lb":
            # the p < 1 direction needs the lower-bound geometry
            _require_lower_bound(geometry, omega)
    if pairing in ("F_vs_Lt", "inhomog_F_vs_Lt"):
        if not (spec.p > 1 and spec.q > 1):
            raise ExperimentError(
                "hypothesis violated: F = L_t needs p, q in (1, inf]")
    if pairing == "F_vs_Lt_u":
        if not spec.p <= 1:
            raise ExperimentError(
                "hypothesis violated: the u-variant inclusion targets p <= 1")
        if not spec.u < min(spec.p, spec.q):
            raise ExperimentError(
                f"hypothesis violated: u={spec.u} not below min(p,q)")
        _require_lower_bound(geometry, omega)


def _require_lower_bound(geometry, omega):
    if geometry is None or geometry.q_global is None:
        raise ExperimentError(
            "hypothesis violated: p <= 1 pairing needs a lower-bound "
            "exponent fit (geometry report)")
    if abs(geometry.q_global - omega) > 0.15 * omega:
        raise ExperimentError(
            f"hypothesis violated: fitted lower bound {geometry.q_global:.3g}"
            f" not within 15% of omega={omega:.3g}")


def equivalence_experiment(space, stack, cubes, spec, pairing, ensemble,
                           omega=None, eta=None, geometry=None, caps=None,
                           check=True):
    """Compute both norms of the pairing over the ensemble; band the ratios."""
    if pairing not in PAIRINGS:
        raise ExperimentError(f"unknown pairing {pairing!r}")
    caps = {**DEFAULT_CAPS, **(caps or {})}
    if check:
        if omega is None or eta is None:
            raise ExperimentError("hypothesis check needs omega and eta")
        check_hypotheses(pairing, spec, omega, eta, geometry)
    left_fn, right_fn = _pairing_sides(pairing, spec, stack, cubes)
    left, right, ratios = [], [], []
    excluded = 0
    for f in ensemble:
        l = left_fn(f)
        r = right_fn(f)
        scale = max(abs(l), abs(r))
        if scale <= DEGENERATE_TOL or min(l, r) <= DEGENERATE_TOL * scale:
            excluded += 1
            continue
        left.append(l)
        right.append(r)
        ratios.append(l / r)
    if not ratios:
        raise ExperimentError("all ensemble fields degenerate for "
                              f"pairing {pairing}")
    gm = float(np.exp(np.mean(np.log(ratios))))
    return EquivalenceReport(pairing=pairing, spec=spec, left=left,
                             right=right, ratios=ratios, excluded=excluded,
                             caps=caps, geometric_mean=gm)


def band_drift(report_a, report_b):
    """Multiplicative drift of the geometric-mean ratio between two runs."""
    a, b = report_a.geometric_mean, report_b.geometric_mean
    return max(a / b, b / a)


# -- embedding suite -----------------------------------------------------------

def embedding_suite(space, stack, cubes, ensemble, spec, omega,
                    geometry=None, caps=None):
    """Exact inclusion inequalities plus constant-bearing embedding bands."""
    caps = {**DEFAULT_CAPS, **(caps or {})}
    rep = SuiteReport("embedding suite")
    slack = 1 + 1e-12

    q0, q1 = (spec.q, 2 * spec.q) if spec.q != INF else (2.0, INF)
    variants = ("Ldot", "Lb_dot", "Lt_dot", "L", "Lb", "Lt")
    bad = 0
    for f in ensemble:
        for variant in variants:
            v0 = lipschitz_norm(f, replace(spec, q=q0), variant)
            v1 = lipschitz_norm(f, replace(spec, q=q1), variant)
            if v1 > v0 * slack:
                bad += 1
    rep.add("q-monotonicity (all variants)", "exact", passed=bad == 0,
            value=bad, q0=q0, q1=q1)

    bad = 0
    if spec.p >= 1:
        for f in ensemble:
            lb = lipschitz_norm(f, spec, "Lb_dot")
            ld = lipschitz_norm(f, spec, "Ldot")
            if lb > ld * slack:
                bad += 1
        rep.add("Jensen: Lb_dot <= Ldot (p >= 1)", "exact", passed=bad == 0,
                value=bad)

    eps = 0.2
    bad = 0
    for f in ensemble:
        lo = truncated_norm(f, spec, "L_tilde")
        hi = truncated_norm(f, replace(spec, s=spec.s + eps), "L_tilde")
        if lo > hi * slack:
            bad += 1
    rep.add("smoothness shift: truncated s <= s+eps", "exact",
            passed=bad == 0, value=bad, eps=eps)

    bad = 0
    for f in ensemble:
        full = lipschitz_norm(f, spec, "Ldot")
        trunc = truncated_norm(f, spec, "L_tilde")
        if trunc > full * slack:
            bad += 1
    rep.add("truncated <= full scale sum", "exact", passed=bad == 0,
            value=bad)

    ratios = []
    for f in ensemble:
        full = lipschitz_norm(f, spec, "L")
        trunc = lebesgue_norm(f, spec.p) + truncated_norm(f, spec, "L_tilde")
        if min(full, trunc) > DEGENERATE_TOL:
            ratios.append(full / trunc)
    if ratios:
        band = max(ratios) / min(ratios)
        rep.add("truncation equivalence band (L vs Lp + truncated)", "band",
                passed=band <= caps["truncation_band"], value=band,
                lo=min(ratios), hi=max(ratios), cap=caps["truncation_band"])

    # Sobolev-type embeddings for p <= 1 under the (local) lower-bound
    # hypothesis: the homogeneous rows gate on the global exponent fit, the
    # inhomogeneous ones on the local fit
    p_emb = max(omega / (omega + spec.s) + 0.05, 0.75)
    if p_emb <= 1.0:
        s_target = spec.s - omega * (1.0 / p_emb - 1.0)
        fit = None
        if geometry is not None:
            fit = (geometry.q_global if spec.flavor == "homogeneous"
                   else geometry.q_local)
        ok_geom = fit is not None and abs(fit - omega) <= 0.15 * omega
        tag = ("local lower bound" if spec.flavor == "inhomogeneous"
               else "lower bound")
        if ok_geom and s_target > 0:
            src = replace(spec, p=p_emb)
            tgt = replace(spec, p=1.0, s=s_target)
            for name, norm_fn in (("Besov", besov_norm),
                                  ("Triebel-Lizorkin",
                                   triebel_lizorkin_norm)):
                ratios = []
                for f in ensemble:
                    a = norm_fn(f, src, stack, cubes)
                    b = norm_fn(f, tgt, stack, cubes)
                    if min(a, b) > DEGENERATE_TOL:
                        ratios.append(b / a)
                if ratios:
                    band = max(ratios)
                    rep.add(f"{name} embedding band p<=1 -> p=1", "band",
                            passed=math.isfinite(band), value=band,
                            p=p_emb, s_target=s_target, lo=min(ratios))
        else:
            rep.add("embedding bands p<=1 -> p=1", "band", passed=None,
                    value=None, skipped=f"{tag} hypothesis unmet")
    return rep


# -- lemma suite ----------------------------------------------------------------

def theta_power_check(n_sequences=10_000, length=40, seed=0):
    """(sum a)^theta <= sum a^theta for theta in (0,1]; returns violations."""
    rng = np.random.default_rng(seed)
    a = rng.exponential(size=(n_sequences, length))
    theta = rng.uniform(0.0, 1.0, size=n_sequences) + 1e-12
    theta = np.minimum(theta, 1.0)
    lhs = a.sum(axis=1) ** theta
    rhs = (a ** theta[:, None]).sum(axis=1)
    return int(np.sum(lhs > rhs * (1 + 1e-12)))


def _lemma_geometric_rows(rep, space, caps):
    d = space.dist
    w = space.weight
    v = space.v_table()
    radii = default_radius_grid(space)

    band = r_gamma_integral_band(space, 2.0, radii)
    vals = list(band.values())
    ratio = max(vals) / min(vals)
    rep.add("R_gamma integral stable across radii", "band",
            passed=ratio <= caps["integral_band"], value=ratio,
            cap=caps["integral_band"], gamma=2.0)

    offdiag = ~np.eye(space.n, dtype=bool)
    beta = 0.5
    ins, outs = [], []
    for R in radii:
        near = offdiag & (d <= R)
        far = offdiag & (d >= R)
        with np.errstate(divide="ignore", invalid="ignore"):
            t_in = np.where(near, (d / R) ** beta / v, 0.0)
            t_out = np.where(far, (R / d) ** beta / v, 0.0)
        ins.append(float((t_in * w[None, :]).sum(axis=1).max()))
        outs.append(float((t_out * w[None, :]).sum(axis=1).max()))
    rep.add("near-ball singular integral bounded", "band",
            passed=max(ins) / min(ins) <= caps["integral_band"],
            value=max(ins) / min(ins), cap=caps["integral_band"], beta=beta)
    rep.add("far-ball singular integral bounded", "band",
            passed=max(outs) / min(outs) <= caps["integral_band"],
            value=max(outs) / min(outs), cap=caps["integral_band"], beta=beta)

    gamma = 2.0
    consts = []
    for r in radii[:3]:
        vr = space.ball_measure(r)
        for R in radii[:3]:
            far = d >= R
            t = np.where(far, (r / (r + d)) ** gamma, 0.0) / (vr[:, None] + v)
            lhs = (t * w[None, :]).sum(axis=1).max()
            consts.append(float(lhs / (r / (r + R)) ** gamma))
    ratio = max(consts) / max(min(consts), 1e-300)
    rep.add("tail integral vs (r/(r+R))^gamma stable", "band",
            passed=ratio <= caps["two_sided_band"], value=ratio,
            cap=caps["two_sided_band"], gamma=gamma)


def _lemma_discrete_rows(rep, space, cubes, stack, omega, caps, seed):
    rng = np.random.default_rng(seed)
    d = space.dist
    v = space.v_table()
    delta = stack.delta
    levels = [k for k in stack.levels() if k in (cubes.subcubes or {})]
    if len(levels) < 3:
        rep.add("discrete Riesz-sum rows", "band", passed=None,
                value=None, skipped="not enough refined levels")
        return
    mids = levels[1:-1][:4]
    gamma = 2.0 * max(omega, 1.0)
    p_small = 0.8

    uppers, lowers = [], []
    dom_consts = []
    for k in mids:
        for kp in (k - 1, k + 1):
            scale = delta ** min(k, kp)
            vk = space.ball_measure(scale)
            _, _, y, wgt, sub_assign = cubes.sample_arrays(k)
            base = 1.0 / (vk[:, None] + v[:, y])
            decay = (scale / (scale + d[:, y])) ** gamma
            s = ((base ** p_small) * (decay ** p_small) * wgt[None, :]).sum(axis=1)
            ref = vk ** (1.0 - p_small)
            uppers.append(float((s / ref).max()))
            lowers.append(float((s / ref).min()))

            a = rng.exponential(size=len(y))
            lhs = (base * decay * (wgt * a)[None, :]).sum(axis=1)
            r_exp = 0.8
            inside = (a ** r_exp)[sub_assign]
            m_of = hl_maximal(space, Field(space, inside)).values ** (1.0 / r_exp)
            factor = delta ** ((k - min(k, kp)) * omega * (1 - 1.0 / r_exp))
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(m_of > 0, lhs / (factor * m_of), 0.0)
            dom_consts.append(float(ratio.max()))

    band = max(uppers) / min(lowers)
    rep.add("two-sided subcube Riesz sum vs V^(1-p)", "band",
            passed=band <= caps["two_sided_band"], value=band,
            upper=max(uppers), lower=min(lowers),
            cap=caps["two_sided_band"], gamma=gamma, p=p_small)
    band = max(dom_consts) / max(min(dom_consts), 1e-300)
    rep.add("maximal domination constant stable", "band",
            passed=band <= caps["two_sided_band"], value=band,
            cap=caps["two_sided_band"])


def fefferman_stein_constant(space, p, q, n_families=12, family_size=6,
                             seed=0):
    """Empirical constant of the vector-valued maximal inequality."""
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(n_families):
        fam = rng.standard_normal((family_size, space.n))
        mf = np.stack([hl_maximal(space, Field(space, g)).values
                       for g in fam])
        if q == INF:
            lhs_v = np.max(mf, axis=0)
            rhs_v = np.max(np.abs(fam), axis=0)
        else:
            lhs_v = (mf ** q).sum(axis=0) ** (1.0 / q)
            rhs_v = (np.abs(fam) ** q).sum(axis=0) ** (1.0 / q)
        lhs = lebesgue_norm(Field(space, lhs_v), p)
        rhs = lebesgue_norm(Field(space, rhs_v), p)
        best = max(best, lhs / rhs)
    return best


def lemma_suite(space, cubes=None, stack=None, omega=1.0, caps=None, seed=0):
    """Numerical instantiation of the auxiliary inequalities."""
    caps = {**DEFAULT_CAPS, **(caps or {})}
    rep = SuiteReport("lemma suite")
    bad = theta_power_check(seed=seed)
    rep.add("theta-power inequality", "exact", passed=bad == 0, value=bad,
            sequences=10_000)
    _lemma_geometric_rows(rep, space, caps)
    if cubes is not None and stack is not None:
        _lemma_discrete_rows(rep, space, cubes, stack, omega, caps, seed)
    for (p, q) in ((1.5, 2.0), (2.0, 2.0), (4.0, 4.0)):
        c = fefferman_stein_constant(space, p, q, seed=seed)
        rep.add(f"Fefferman-Stein constant p={p} q={q}", "value",
                passed=math.isfinite(c), value=c)
    return rep


# -- sampled-coefficient norm (sampler-independence probe) ----------------------

def sampled_besov_norm(f, spec, stack, cubes):
    """[sum_k d^(-ksq) (sum_{alpha,m} mu(Q^{k,m}) |Q_k f(y^{k,m})|^p)^(q/p)]^(1/q).

    The sampled counterpart of the Besov norm; the theory says its value
    band does not depend on the choice of the sample points.
    """
    delta = stack.delta
    terms = []
    for k in stack.levels():
        g = stack.apply(k, f.values)
        _, _, y, wgt, _ = cubes.sample_arrays(k)
        if spec.p == INF:
            val = float(np.max(np.abs(g[y])))
        else:
            val = float(np.sum(wgt * np.abs(g[y]) ** spec.p) ** (1.0 / spec.p))
        terms.append(delta ** (-k * spec.s) * val)
    if spec.q == INF:
        return max(terms)
    return float(np.sum(np.asarray(terms) ** spec.q) ** (1.0 / spec.q))
