import json

import numpy as np
import pytest

from scca import center_scale, gen_rank_one, load_view, write_view
from scca.cli import load_solution, main
from scca.simulate import RankOneSpec

SMALL = ["--n", "20", "--p", "40,30", "--sigma", "0.15", "--supports", "5:5,4:4"]


def _simulate(tmp_path, seed="3", extra=()):
    out = tmp_path / "data"
    code = main(["simulate", "--model", "pair", *SMALL, "--seed", seed,
                 "--out", str(out), *extra])
    assert code == 0
    return out


def _write_small_views(tmp_path, seed=4):
    spec = RankOneSpec(p=(40, 30), n=20, sigma=(0.15, 0.15), seed=seed,
                       supports=((5, 5), (4, 4)))
    x1, x2, truths = gen_rank_one(spec)
    write_view(x1, tmp_path / "x1.csv")
    write_view(x2, tmp_path / "x2.csv")
    return x1, x2, truths


def test_simulate_writes_files_and_is_deterministic(tmp_path):
    out1 = _simulate(tmp_path / "a")
    out2 = _simulate(tmp_path / "b")
    for name in ("x1.csv", "x2.csv", "truth1.csv", "truth2.csv"):
        assert (out1 / name).exists()
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
    view = load_view(out1 / "x1.csv")
    assert view.data.shape == (20, 40)


def test_scca_run_and_solution_roundtrip(tmp_path):
    x1, x2, _ = _write_small_views(tmp_path)
    block = center_scale(x1).data.T @ center_scale(x2).data / 20
    g1 = 0.4 * np.linalg.norm(block, axis=1).max()
    g2 = 0.4 * np.linalg.norm(block, axis=0).max()
    out = tmp_path / "run"
    code = main(["scca", "--x1", str(tmp_path / "x1.csv"), "--x2",
                 str(tmp_path / "x2.csv"), "--gamma1", str(g1), "--gamma2",
                 str(g2), "--no-scale", "--out", str(out)])
    assert code == 0
    doc = json.loads((out / "solution.json").read_text())
    assert doc["format"] == "scca-solution"
    assert doc["metadata"]["config"]["gamma1"] == pytest.approx(g1)
    sol, names, config = load_solution(out / "solution.json")
    assert names[0] == x1.names
    # active entries match patterns
    for i in range(2):
        direction = sol.directions[i][:, 0]
        bits = sol.patterns[i][0].bits
        assert np.array_equal(direction != 0, bits)


def test_scca_zero_gamma_dense(tmp_path):
    _write_small_views(tmp_path)
    out = tmp_path / "dense"
    code = main(["scca", "--x1", str(tmp_path / "x1.csv"), "--x2",
                 str(tmp_path / "x2.csv"), "--no-scale", "--out", str(out)])
    assert code == 0
    sol, _names, _cfg = load_solution(out / "solution.json")
    assert sol.patterns[0][0].active_count == 40
    assert sol.patterns[1][0].active_count == 30


def test_scca_l0_penalty(tmp_path):
    _write_small_views(tmp_path, seed=20)
    out = tmp_path / "l0"
    code = main(["scca", "--x1", str(tmp_path / "x1.csv"), "--x2",
                 str(tmp_path / "x2.csv"), "--penalty", "l0", "--gamma1",
                 "0.25", "--gamma2", "0.25", "--no-scale", "--out", str(out)])
    assert code == 0
    sol, _n, cfg = load_solution(out / "solution.json")
    assert cfg["penalty"] == "l0"
    assert 0 < sol.patterns[0][0].active_count


def test_scca_missing_file_exits_1(tmp_path):
    assert main(["scca", "--x1", str(tmp_path / "nope.csv"), "--x2",
                 str(tmp_path / "nope2.csv")]) == 1


def test_scca_empty_support_exits_2(tmp_path):
    _write_small_views(tmp_path)
    assert main(["scca", "--x1", str(tmp_path / "x1.csv"), "--x2",
                 str(tmp_path / "x2.csv"), "--gamma2", "1e9", "--no-scale",
                 "--out", str(tmp_path / "o")]) == 2


def test_usage_error_exits_1():
    assert main(["frobnicate"]) == 1
    assert main(["scca"]) == 1  # missing required inputs


def test_byte_identical_reruns(tmp_path):
    _write_small_views(tmp_path)
    args = ["scca", "--x1", str(tmp_path / "x1.csv"), "--x2",
            str(tmp_path / "x2.csv"), "--gamma1", "0.5", "--gamma2", "0.5",
            "--no-scale", "--seed", "9"]
    assert main(args + ["--out", str(tmp_path / "r1")]) == 0
    assert main(args + ["--out", str(tmp_path / "r2")]) == 0
    assert ((tmp_path / "r1" / "solution.json").read_bytes()
            == (tmp_path / "r2" / "solution.json").read_bytes())


def test_mscca_matches_scca_for_two_views(tmp_path):
    x1, x2, _ = _write_small_views(tmp_path, seed=6)
    block = center_scale(x1).data.T @ center_scale(x2).data / 20
    g1 = 0.35 * np.linalg.norm(block, axis=1).max()
    g2 = 0.35 * np.linalg.norm(block, axis=0).max()
    assert main(["scca", "--x1", str(tmp_path / "x1.csv"), "--x2",
                 str(tmp_path / "x2.csv"), "--gamma1", str(g1), "--gamma2",
                 str(g2), "--no-scale", "--out", str(tmp_path / "pair")]) == 0
    assert main(["mscca", "--views", str(tmp_path / "x1.csv"),
                 str(tmp_path / "x2.csv"), "--gamma1", str(g1), "--gamma2",
                 str(g2), "--no-scale", "--out", str(tmp_path / "multi")]) == 0
    pair, _n, _c = load_solution(tmp_path / "pair" / "solution.json")
    multi, _n2, _c2 = load_solution(tmp_path / "multi" / "solution.json")
    for i in range(2):
        assert (pair.patterns[i][0].bits.tolist()
                == multi.patterns[i][0].bits.tolist())


def test_mscca_bad_gamma_matrix_exits_1(tmp_path):
    _write_small_views(tmp_path)
    assert main(["mscca", "--views", str(tmp_path / "x1.csv"),
                 str(tmp_path / "x2.csv"), "--gamma-matrix", "[[0,1,0],[1,0,0],[0,0,0]]",
                 "--out", str(tmp_path / "o")]) == 1


def test_dscca_eps_zero_matches_scca(tmp_path):
    x1, x2, truths = _write_small_views(tmp_path, seed=8)
    y = center_scale(x1).data @ truths[0]
    (tmp_path / "y.csv").write_text("y\n" + "\n".join(repr(float(v)) for v in y) + "\n")
    block = center_scale(x1).data.T @ center_scale(x2).data / 20
    g1 = 0.35 * np.linalg.norm(block, axis=1).max()
    g2 = 0.35 * np.linalg.norm(block, axis=0).max()
    common = ["--gamma1", str(g1), "--gamma2", str(g2), "--no-scale"]
    assert main(["scca", "--x1", str(tmp_path / "x1.csv"), "--x2",
                 str(tmp_path / "x2.csv"), *common,
                 "--out", str(tmp_path / "plain")]) == 0
    assert main(["dscca", "--x1", str(tmp_path / "x1.csv"), "--x2",
                 str(tmp_path / "x2.csv"), "--y", str(tmp_path / "y.csv"),
                 "--eps1", "0", "--eps2", "0", *common,
                 "--out", str(tmp_path / "dir")]) == 0
    plain, _n, _c = load_solution(tmp_path / "plain" / "solution.json")
    directed, _n2, _c2 = load_solution(tmp_path / "dir" / "solution.json")
    for i in range(2):
        assert (plain.patterns[i][0].bits.tolist()
                == directed.patterns[i][0].bits.tolist())


def test_dscca_length_mismatch_exits_1(tmp_path):
    _write_small_views(tmp_path)
    (tmp_path / "y.csv").write_text("y\n1.0\n2.0\n3.0\n")
    assert main(["dscca", "--x1", str(tmp_path / "x1.csv"), "--x2",
                 str(tmp_path / "x2.csv"), "--y", str(tmp_path / "y.csv"),
                 "--out", str(tmp_path / "o")]) == 1


def test_dscca_stacked_and_two_stage_modes(tmp_path):
    x1, x2, truths = _write_small_views(tmp_path, seed=10)
    y = center_scale(x1).data @ truths[0]
    (tmp_path / "y.csv").write_text("y\n" + "\n".join(repr(float(v)) for v in y) + "\n")
    for mode in ("stacked", "two-stage"):
        code = main(["dscca", "--x1", str(tmp_path / "x1.csv"), "--x2",
                     str(tmp_path / "x2.csv"), "--y", str(tmp_path / "y.csv"),
                     "--mode", mode, "--gamma1", "0.05", "--gamma2", "0.05",
                     "--no-scale", "--out", str(tmp_path / mode)])
        assert code == 0
        sol, _n, _c = load_solution(tmp_path / mode / "solution.json")
        assert sol.factor_count == 1


def test_tune_single_cell_and_reproducible(tmp_path):
    _write_small_views(tmp_path, seed=12)
    args = ["tune", "--x1", str(tmp_path / "x1.csv"), "--x2",
            str(tmp_path / "x2.csv"), "--gamma1-grid", "0.5", "--gamma2-grid",
            "0.5", "--permutations", "10", "--no-scale", "--seed", "5"]
    assert main(args + ["--out", str(tmp_path / "t1")]) == 0
    assert main(args + ["--out", str(tmp_path / "t2")]) == 0
    b1 = (tmp_path / "t1" / "tune.json").read_bytes()
    assert b1 == (tmp_path / "t2" / "tune.json").read_bytes()
    doc = json.loads(b1)
    assert doc["report"]["chosen"]["gamma1"] == 0.5


def test_config_file_with_flag_precedence(tmp_path):
    _write_small_views(tmp_path, seed=14)
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"gamma1": 0.4, "gamma2": 0.4, "scale": False}))
    out = tmp_path / "out"
    assert main(["scca", "--x1", str(tmp_path / "x1.csv"), "--x2",
                 str(tmp_path / "x2.csv"), "--config", str(cfg),
                 "--gamma2", "0.6", "--out", str(out)]) == 0
    doc = json.loads((out / "solution.json").read_text())
    assert doc["metadata"]["config"]["gamma1"] == 0.4   # from config
    assert doc["metadata"]["config"]["gamma2"] == 0.6   # flag wins
    assert doc["metadata"]["config"]["scale"] is False


def test_report_commands(tmp_path):
    from scca import ViewMatrix
    rng = np.random.default_rng(16)
    write_view(ViewMatrix(rng.standard_normal((20, 8)),
                          [f"A{j}" for j in range(8)]), tmp_path / "x1.csv")
    write_view(ViewMatrix(rng.standard_normal((20, 6)),
                          [f"B{j}" for j in range(6)]), tmp_path / "x2.csv")
    out = tmp_path / "fit"
    assert main(["scca", "--x1", str(tmp_path / "x1.csv"), "--x2",
                 str(tmp_path / "x2.csv"), "--factors", "2",
                 "--no-scale", "--out", str(out)]) == 0
    rep = tmp_path / "rep"
    code = main(["report", "--solution", str(out / "solution.json"), "--views",
                 str(tmp_path / "x1.csv"), str(tmp_path / "x2.csv"),
                 "--kind", "biplot", "--format", "csv", "--out", str(rep)])
    assert code == 0
    assert (rep / "biplot.csv").exists()
    # byte determinism of report emission
    rep2 = tmp_path / "rep2"
    main(["report", "--solution", str(out / "solution.json"), "--views",
          str(tmp_path / "x1.csv"), str(tmp_path / "x2.csv"),
          "--kind", "biplot", "--format", "csv", "--out", str(rep2)])
    assert ((rep / "biplot.csv").read_bytes() == (rep2 / "biplot.csv").read_bytes())


def test_report_single_factor_exits_2(tmp_path):
    _write_small_views(tmp_path, seed=18)
    out = tmp_path / "fit1"
    assert main(["scca", "--x1", str(tmp_path / "x1.csv"), "--x2",
                 str(tmp_path / "x2.csv"), "--gamma1", "0.3", "--gamma2", "0.3",
                 "--no-scale", "--out", str(out)]) == 0
    assert main(["report", "--solution", str(out / "solution.json"), "--views",
                 str(tmp_path / "x1.csv"), str(tmp_path / "x2.csv"),
                 "--out", str(tmp_path / "r")]) == 2


def test_simulate_three_view_and_sweep(tmp_path):
    out = tmp_path / "three"
    assert main(["simulate", "--model", "three", "--n", "20",
                 "--p", "30,24,36", "--sigma", "0.1,0.1,0.1",
                 "--supports", "4:4,4:4,4:4", "--out", str(out)]) == 0
    for name in ("x1.csv", "x2.csv", "x3.csv", "truth3.csv"):
        assert (out / name).exists()
