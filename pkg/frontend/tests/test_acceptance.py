"""Acceptance for the figure package: regenerate a two-curve fixture and
check the plotted points against the CSV, plus the net = air x symbol-rate
panel relation.  Run with -s for the PASS/FAIL line."""

from figplots import PlotSpec, render

# verbatim rows from a `ddlink sweep` over c in {1.5, 2.0} x R_sym in
# {20, 40} GBaud (tiny noise-on binary link, decision + genie modes)
SWEEP_FIXTURE = """m,c,r_sym_baud,rop_dbm,s_stages,stage,rate_bpcu,i_s_bpcu,r_b_bits_per_s,mc_err_bpcu,seed,git_rev,config_hash,mode
2,1.5,20000000000.0,-15.0,1,1,0.20466949620460265,0.20466949620460265,4093389924.092053,0.026600869263109565,42,a89cb5d,e02b6b2e8db4,decision
2,1.5,20000000000.0,-15.0,1,1,0.20466949620460265,0.20466949620460265,4093389924.092053,0.026600869263109565,42,a89cb5d,e02b6b2e8db4,genie
2,1.5,40000000000.0,-15.0,1,1,0.20352769982227795,0.20352769982227795,8141107992.891118,0.026577537254707406,42,a89cb5d,1eaddf7a403d,decision
2,1.5,40000000000.0,-15.0,1,1,0.20352769982227795,0.20352769982227795,8141107992.891118,0.026577537254707406,42,a89cb5d,1eaddf7a403d,genie
2,2.0,20000000000.0,-15.0,1,1,0.2188224221189859,0.2188224221189859,4376448442.379718,0.02605685609279878,42,a89cb5d,eb24e788ff21,decision
2,2.0,20000000000.0,-15.0,1,1,0.2188224221189859,0.2188224221189859,4376448442.379718,0.02605685609279878,42,a89cb5d,eb24e788ff21,genie
2,2.0,40000000000.0,-15.0,1,1,0.21835169757086467,0.21835169757086467,8734067902.834587,0.026006282035923346,42,a89cb5d,f6e033493e93,decision
2,2.0,40000000000.0,-15.0,1,1,0.21835169757086467,0.21835169757086467,8734067902.834587,0.026006282035923346,42,a89cb5d,f6e033493e93,genie
"""


def _report(name, ok, detail):
    print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def test_two_curve_fixture_round_trip(tmp_path):
    path = tmp_path / "results.csv"
    path.write_text(SWEEP_FIXTURE)
    air = render(PlotSpec((str(path),), "air", "c", str(tmp_path / "air.svg")))
    net = render(PlotSpec((str(path),), "net", "c", str(tmp_path / "net.svg")))

    # extracted plotted points equal the CSV within float round-trip
    expected_air = {
        "1.5": ([20000000000.0, 40000000000.0],
                [0.20466949620460265, 0.20352769982227795]),
        "2.0": ([20000000000.0, 40000000000.0],
                [0.2188224221189859, 0.21835169757086467]),
    }
    points_ok = air == expected_air
    # the net column is the exact float product rate x symbol rate and the
    # CSV stores round-trip-exact floats, so the relation holds exactly
    ratio_ok = all(
        n == a * x
        for key in air
        for x, a, n in zip(air[key][0], air[key][1], net[key][1]))
    curves_ok = set(air) == {"1.5", "2.0"} and (tmp_path / "air.svg").exists() \
        and (tmp_path / "net.svg").exists()
    _report("fig-plots fixture regeneration",
            points_ok and ratio_ok and curves_ok,
            f"two labeled curves, {sum(len(x) for x, _ in air.values())} "
            "points match the CSV exactly; net panel = air panel x symbol rate")
