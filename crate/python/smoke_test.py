"""Smoke test for the basisrisk extension module.

Build and install first:

    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/basisrisk-*.whl
"""

import math
import tempfile

import basisrisk as br


def main():
    assert abs(br.crra_utility(100.0, 1.5) + 0.2) < 1e-12
    assert abs(br.certainty_equivalent([100.0, 64.0]) - 79.0123) < 1e-4
    absolute, relative = br.risk_premium([100.0, 64.0])
    assert abs(absolute - (82.0 - 79.012345679)) < 1e-6

    assert abs(br.cpt_value([110.0], 100.0) - 7.5858) < 1e-4
    assert abs(br.cpt_value([90.0], 100.0) + 17.068) < 1e-3
    assert br.cpt_value([100.0], 100.0) == 0.0
    assert br.probability_weight(0.0, 0.61) == 0.0

    assert br.indemnities(0.9, 180.0, [150.0, 170.0, 162.0]) == [12.0, 0.0, 0.0]
    assert abs(br.subsidized_premium(10.0, "area", 0.9) - 4.9) < 1e-12
    try:
        br.subsidized_premium(10.0, "farm", 0.9)
    except ValueError:
        pass
    else:
        raise AssertionError("farm 90% should not be offered")

    county = [150.0, 162.0, 140.0, 171.0, 158.0, 120.0, 166.0, 175.0, 149.0, 160.0]
    fit = br.fit_regression([2 * c + 5 for c in county], county)
    assert abs(fit["beta"] - 2.0) < 1e-12 and abs(fit["alpha"] - 5.0) < 1e-9
    assert abs(br.critical_beta([20.0, 0.0], [80.0, 120.0]) - 0.25) < 1e-15

    tn = br.TruncatedNormal(180.0, 30.0, 10.0, 350.0)
    draws = tn.sample(20000, seed=4)
    assert all(10.0 <= x <= 350.0 for x in draws)
    assert abs(sum(draws) / len(draws) - tn.mean()) < 1.0

    ev = br.evaluate_field(county, county)
    assert ev["ce_area"] == ev["ce_farm"]["0.90"]

    panel = br.Panel.synthetic(n_counties=4, fields_per_county=5, n_years=12)
    assert len(panel) == 20 and panel.provenance() == "synthetic"

    rows = br.run_in_memory("seed = 1\n[synthetic]\nn_counties = 4\nfields_per_county = 10\n")
    assert len(rows) == 4
    assert all(0.0 <= r["share_ge_85"] <= 1.0 for r in rows)
    assert all(math.isfinite(r["mean_ce_gain_vs_none"]) for r in rows)

    with tempfile.TemporaryDirectory() as d:
        files = br.run_pipeline(f'seed = 1\nout = "{d}"\n[synthetic]\nn_counties = 4\nfields_per_county = 5\n')
        assert any(f.endswith("manifest.json") for f in files)

    print("python smoke test passed")


if __name__ == "__main__":
    main()
