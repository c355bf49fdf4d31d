"""Monte-Carlo properties at desk scale (n=300, N=8n, p=100, 50 replications)."""

import numpy as np
import pytest
from scipy.stats import binomtest

pytestmark = pytest.mark.slow


def _by_rep(report, method, target, key):
    out = {}
    for r in report.records:
        if r["method"] == method and r["target"] == target and r["error"] is None:
            out[r["rep"]] = key(r)
    return out


def _half(r):
    return (r["ci_high"] - r["ci_low"]) / 2


def _sq_err(r):
    return (r["estimate"] - r["truth"]) ** 2


@pytest.mark.parametrize("target", ["theta1", "theta6"])
def test_sssl_no_less_efficient_sign_test(model1_desk_report, target):
    """Paired sign test on squared errors: S-SSL is not significantly worse than D-Lasso1."""
    s = _by_rep(model1_desk_report, "sssl", target, _sq_err)
    d = _by_rep(model1_desk_report, "dlasso1", target, _sq_err)
    reps = sorted(set(s) & set(d))
    worse = sum(s[k] > d[k] for k in reps)
    ties = sum(s[k] == d[k] for k in reps)
    p = binomtest(worse, len(reps) - ties, 0.5, alternative="greater").pvalue
    print(f"{target}: S-SSL worse in {worse}/{len(reps) - ties} replications, sign-test p = {p:.3f}")
    assert p > 0.05


def test_model2_dssl_shorter_than_dlasso1(model2_desk_report):
    d = _by_rep(model2_desk_report, "dssl", "theta6", _half)
    l1 = _by_rep(model2_desk_report, "dlasso1", "theta6", _half)
    reps = sorted(set(d) & set(l1))
    frac = np.mean([d[k] < l1[k] for k in reps])
    print(f"D-SSL interval shorter than D-Lasso1 in {frac:.0%} of {len(reps)} replications")
    assert len(reps) == 50
    assert frac >= 0.8


def test_model2_sssl_mean_half_length_below_dlasso1(model2_desk_report):
    rows = {r["method"]: r for r in model2_desk_report.rows}
    print(f"theta6 mean half-length: S-SSL {rows['sssl']['half_len']:.4f}, D-Lasso1 {rows['dlasso1']['half_len']:.4f}")
    assert rows["sssl"]["half_len"] < rows["dlasso1"]["half_len"]
