"""Regenerates tests/fixtures/reference_stats.json from scipy.

    python3 tests/oracle/gen_reference_stats.py

The fixture is committed so the C++ tests run without Python.
"""
import json
import pathlib

import numpy as np
import scipy
from scipy import stats

OUT = pathlib.Path(__file__).resolve().parents[1] / "fixtures" / "reference_stats.json"
rng = np.random.default_rng(20240611)


def draw(kind, n):
    if kind == "normal":
        return rng.normal(rng.uniform(-2, 2), rng.uniform(0.5, 3), n)
    if kind == "skewed":
        return rng.exponential(rng.uniform(0.5, 2), n)
    if kind == "likert":
        return rng.integers(1, 8, n).astype(float)
    if kind == "centered":
        # mean-centered Likert-like values with many ties
        v = rng.integers(1, 8, n).astype(float)
        return v - v.mean()
    if kind == "bimodal":
        return np.concatenate([rng.normal(-2, 0.3, n // 2), rng.normal(2, 0.3, n - n // 2)])
    raise ValueError(kind)


def w_plus(x, y):
    d = x - y
    d = d[d != 0]
    r = stats.rankdata(np.abs(d))
    return float(r[d > 0].sum())


datasets = []
kinds = ["normal", "skewed", "likert", "centered", "bimodal"]
while len(datasets) < 100:
    i = len(datasets)
    kind = kinds[i % len(kinds)]
    n1 = int(rng.integers(30, 400))
    paired = i % 2 == 0
    n2 = n1 if paired else int(rng.integers(30, 400))
    x = draw(kind, n1)
    y = draw(kind, n2) + (rng.normal(0, 0.3) if kind != "likert" else 0.0)
    if kind == "likert":
        y = np.round(y)
    entry = {"kind": kind, "x": x.tolist(), "y": y.tolist()}

    if paired:
        if np.count_nonzero(x - y) <= 25:
            continue
        p = stats.pearsonr(x, y)
        entry["pearson"] = {"statistic": float(p.statistic), "p_value": float(p.pvalue)}
        sr = stats.wilcoxon(x, y, zero_method="wilcox", correction=True, method="approx")
        entry["signed_rank"] = {"statistic": w_plus(x, y), "p_value": float(sr.pvalue)}
    for name, equal_var in (("t_pooled", True), ("t_welch", False)):
        t = stats.ttest_ind(x, y, equal_var=equal_var)
        entry[name] = {"statistic": float(t.statistic), "p_value": float(t.pvalue)}
    u = stats.mannwhitneyu(x, y, use_continuity=True, alternative="two-sided", method="asymptotic")
    entry["rank_sum"] = {"statistic": float(u.statistic), "p_value": float(u.pvalue)}
    sw = stats.shapiro(x)
    entry["shapiro"] = {"statistic": float(sw.statistic), "p_value": float(sw.pvalue)}
    datasets.append(entry)

# Small samples exercise the n <= 11 branch and the exact n = 3 formula.
shapiro_small = []
for n in list(range(3, 26)) + [50, 1000, 4999]:
    kind = kinds[n % len(kinds)] if n > 5 else "normal"
    x = draw(kind, n)
    sw = stats.shapiro(x)
    shapiro_small.append({"x": x.tolist(), "statistic": float(sw.statistic), "p_value": float(sw.pvalue)})

probs = [1e-300, 1e-100, 1e-20, 1e-8, 1e-4, 0.001, 0.01, 0.025, 0.05, 0.1, 0.3, 0.425, 0.5,
         0.575, 0.7, 0.9, 0.95, 0.975, 0.99, 0.999, 1 - 1e-8]
ppf = [{"p": p, "z": float(stats.norm.ppf(p))} for p in probs]

t_tail = []
for t, df in [(0.0, 5), (0.5, 1), (1.96, 10), (2.5, 3.7), (-3.0, 50), (10.0, 2), (1e-6, 100), (4.0, 4000)]:
    t_tail.append({"t": t, "df": df, "p": float(2 * stats.t.sf(abs(t), df))})

OUT.write_text(json.dumps({
    "generator": f"scipy {scipy.__version__}",
    "datasets": datasets,
    "shapiro_small": shapiro_small,
    "norm_ppf": ppf,
    "t_two_sided": t_tail,
}, separators=(",", ":")) + "\n")
print(f"wrote {OUT} ({len(datasets)} datasets)")
