import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mckeanlab import cli
from mckeanlab.config import DEFAULT_TOLERANCES, SUBCOMMANDS, ExperimentConfig, _as_int, default_config
from mckeanlab.report import Check, VerificationReport
from mckeanlab.study import StudyError, apply_level, log_log_slope, run_convergence_study

finite = st.floats(-1e6, 1e6, allow_nan=False)
nonneg = st.floats(0, 1.0)


@given(finite, finite, nonneg)
def test_check_semantics(value, bound, tol):
    assert Check("u", value, bound, tol, "upper").passed == (value <= bound * (1 + tol))
    assert Check("l", value, bound, tol, "lower").passed == (value >= bound * (1 - tol))
    assert Check("r", value, bound, tol, "residual").passed == (abs(value) <= tol * bound)


def test_check_rejects_bad_input():
    assert not Check("n", math.nan, 1.0, 0.0).passed
    with pytest.raises(ValueError):
        Check("p", 0.0, 1.0, 0.0, provenance="")
    with pytest.raises(ValueError):
        Check("k", 0.0, 1.0, 0.0, kind="sideways")


def test_report_json_is_deterministic(tmp_path):
    rep = VerificationReport("demo")
    rep.add("b", 0.5, 1.0, 0.0, "upper", "plumbing", standard_error=0.1, arr=np.arange(3))
    rep.add("a", 2.0, 1.0, 0.0, "upper", "plumbing")
    rep.info["z"] = np.float64(1.5)
    assert not rep.passed and rep.failures() == ["a"]
    rep.write(tmp_path / "r.json")
    first = (tmp_path / "r.json").read_bytes()
    rep.write(tmp_path / "r.json")
    assert (tmp_path / "r.json").read_bytes() == first
    data = json.loads(first)
    assert data["checks"][0]["extra"]["arr"] == [0, 1, 2]
    assert all(c["provenance"] for c in data["checks"])


_key = st.text(alphabet="abcdefghijklmnopqrstuvwxyz_0123456789", min_size=1, max_size=12)
_val = st.text(alphabet=st.characters(min_codepoint=33, max_codepoint=126, blacklist_characters="%"),
               min_size=1, max_size=20)


@given(st.sampled_from(SUBCOMMANDS), st.integers(0, 2**63),
       st.dictionaries(_key.filter(lambda s: s != "run"), st.dictionaries(_key, _val, max_size=5), max_size=4))
def test_config_roundtrip_is_byte_identical(sub, seed, sections):
    cfg = ExperimentConfig(sub, seed, "out", sections)
    text = cfg.to_ini()
    back = ExperimentConfig.from_ini(text)
    assert back.to_ini() == text
    assert back.as_dict() == cfg.as_dict()


@pytest.mark.parametrize("sub", SUBCOMMANDS)
def test_default_configs_roundtrip(sub, tmp_path):
    cfg = default_config(sub, seed=3)
    cfg.save(tmp_path / "c.ini")
    assert ExperimentConfig.load(tmp_path / "c.ini").to_ini() == cfg.to_ini()


def test_config_typed_access_and_tolerances():
    cfg = default_config("particles-moderated")
    assert cfg.get("particles", "N", type_=int) == 10_000
    assert _as_int("1e5") == 100_000
    with pytest.raises(ValueError):
        _as_int("1.5")
    with pytest.raises(KeyError):
        cfg.get("nope", "nothing")
    for name, (default, meaning) in DEFAULT_TOLERANCES.items():
        assert cfg.tolerance(name) == default and meaning
    cfg.set("tolerances", "w1_particles", 0.05)
    assert cfg.tolerance("w1_particles") == 0.05
    assert cfg.tolerance_overrides() == {"w1_particles": 0.05}
    assert cfg.with_value("particles", "N", 7).get("particles", "N", 0) == 7
    assert cfg.get("particles", "N", 0) == 10_000
    with pytest.raises(ValueError):
        ExperimentConfig("bogus")


def test_log_log_slope_exact_power_law():
    x = np.array([1.0, 0.5, 0.25, 0.125])
    assert log_log_slope(x, 3 * x**1.7) == pytest.approx(1.7)
    assert log_log_slope([1.0], [2.0]) is None


def test_apply_level_axes():
    cfg = default_config("convergence-study")
    fine = apply_level(cfg, "h", 0.03125, 0.0625)
    assert fine.get("grid", "n_cells", 0) == 512
    assert fine.get("grid", "dt", 0.0) == pytest.approx(2e-3)
    assert apply_level(cfg, "eps", 0.1, 0.1).get("model", "eps", 0.0) == 0.1
    with pytest.raises(ValueError):
        apply_level(cfg, "nope", 1.0, 1.0)


def test_heat_h_study_slope(tmp_path):
    cfg = default_config("convergence-study")
    table = run_convergence_study(cfg, out_dir=tmp_path)
    assert table.slope >= 0.9
    assert table.monotone_nonincreasing and table.medians[0] > table.medians[-1]
    assert (tmp_path / "study.csv").read_text().splitlines()[0] == "level,seed,l1_error"
    assert json.loads((tmp_path / "study.json").read_text())["slope"] == table.slope


def test_study_edge_cases():
    cfg = default_config("convergence-study")
    single = run_convergence_study(cfg, levels=[0.0625])
    assert len(single.rows) == 1 and single.slope is None
    with pytest.raises(ValueError):
        run_convergence_study(cfg, levels=[0.0625, 0.03125])
    stoch = cfg.copy()
    stoch.set("study", "experiment", "particles-moderated")
    with pytest.raises(ValueError):
        run_convergence_study(stoch, axis="N", levels=[1e3, 2e3, 4e3], seeds=[0])
    bad = cfg.with_value("model", "sigma", "nonsense(1)")
    with pytest.raises(StudyError) as info:
        run_convergence_study(bad, levels=[0.0625])
    assert info.value.level == 0.0625 and info.value.seed == 0


def test_cli_fp_solve_is_reproducible(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["--strict-deterministic", "--set", "grid.n_cells=256", "--set", "grid.dt=4e-3",
            "--set", "reference.l1_bound=1e-2"]
    assert cli.main(args + ["--output", str(a), "fp-solve"]) == 0
    assert cli.main(args + ["--output", str(b), "fp-solve"]) == 0
    for name in ("report.json", "density.csv", "config.ini"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert "grid" in ExperimentConfig.load(a / "config.ini").sections


def test_cli_config_file_and_output_root(tmp_path, monkeypatch):
    ini = tmp_path / "fp.ini"
    assert cli.main(["--seed", "5", "--write-config", str(ini), "fp-solve"]) == 0
    cfg = ExperimentConfig.load(ini)
    assert cfg.seed == 5 and cfg.subcommand == "fp-solve"
    monkeypatch.setenv(cli.OUTPUT_ROOT_ENV, str(tmp_path / "root"))
    assert cli.main(["--config", str(ini), "--set", "grid.n_cells=128", "--set", "grid.dt=1e-2",
                     "--set", "reference.l1_bound=1", "fp-solve"]) == 0
    assert (tmp_path / "root" / "fp-solve" / "report.json").exists()


def test_cli_usage_errors(tmp_path):
    ini = tmp_path / "p.ini"
    default_config("picard").save(ini)
    with pytest.raises(SystemExit) as info:
        cli.main(["--config", str(ini), "fp-solve"])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        cli.main(["--set", "novalue", "fp-solve"])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        cli.main(["nosuchcommand"])
    assert info.value.code == 2


def test_cli_failing_check_exit_code(tmp_path):
    code = cli.main(["--output", str(tmp_path), "--set", "grid.n_cells=64", "--set", "grid.dt=0.05",
                     "--set", "reference.l1_bound=1e-9", "fp-solve"])
    assert code == 1


def test_module_aliases_reexport_implementations():
    import mckeanlab.conditional as conditional
    import mckeanlab.conditional_mckean as conditional_mckean
    import mckeanlab.harness as harness
    import mckeanlab.mild as mild
    import mckeanlab.mild_uniqueness as mild_uniqueness
    import mckeanlab.particle_moderated as particle_moderated
    import mckeanlab.particles as particles

    assert mild_uniqueness.contraction_factor is mild.contraction_factor
    assert particle_moderated.simulate_moderated is particles.simulate_moderated
    assert conditional_mckean.picard_iterate is conditional.picard_iterate
    assert harness.main is cli.main
