import json

import numpy as np
import pytest

from scorepnp import ConfigError, TransportError
from scorepnp.cli import main
from scorepnp.harness import (CellResult, ExperimentConfig, MetricsReport,
                              builtin_kernel, expand_method_grid,
                              run_experiment)


def base_config(**over):
    cfg = {
        "seed": 3,
        "task": {
            "kernel": {"builtin": "box3"},
            "noise_sigma": 0.02,
            "synthetic": {"count": 2, "height": 16, "width": 16},
        },
        "prior": {
            "type": "pixel-gmm",
            "weights": [0.5, 0.5], "means": [0.25, 0.75], "stds": [0.08, 0.08],
            "convention": "vp", "sigma_min": 0.008, "sigma_max": 1.5, "T": 25,
        },
        "methods": [
            {"name": "dpir", "method": "dpir", "K": 15, "lam": 4e-4,
             "sigma1": 0.4, "sigmaK": 0.012},
            {"name": "pnp-admm", "method": "pnp-admm", "K": 15,
             "gamma_scale": 0.43, "sigma1": 0.4, "sigmaK": 0.04},
            {"name": "red", "method": "red", "K": 15, "gamma": 0.91,
             "tau": 1.1, "sigma": 0.02},
        ],
    }
    cfg.update(over)
    return cfg


class TestConfig:
    def test_structural_report(self, tmp_path):
        cfg = ExperimentConfig.from_dict(base_config())
        rep = run_experiment(cfg, out_dir=tmp_path)
        # 2 images x (3 methods + measurement row)
        assert len(rep.rows) == 8
        assert set(rep.method_names()) == {"measurement", "dpir", "pnp-admm", "red"}
        assert not rep.failures
        assert (tmp_path / "report.csv").exists()
        assert (tmp_path / "report.txt").exists()
        assert (tmp_path / "synthetic0_dpir.png").exists()
        assert (tmp_path / "synthetic0_dpir_trace.csv").exists()

    def test_missing_files_fail_validation(self, tmp_path):
        cfg = base_config()
        cfg["task"]["kernel"] = str(tmp_path / "nope.txt")
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(cfg)

    def test_duplicate_method_names_rejected(self):
        cfg = base_config()
        cfg["methods"] = [cfg["methods"][0], dict(cfg["methods"][0])]
        with pytest.raises(ConfigError, match="unique"):
            ExperimentConfig.from_dict(cfg)

    def test_grid_expansion(self):
        entry = {"name": "red", "method": "red", "K": 5, "tau": 1.1,
                 "gamma": [0.3, 0.9], "sigma": [0.02, 0.04]}
        out = expand_method_grid(entry)
        assert len(out) == 4
        names = {e["name"] for e in out}
        assert "red[gamma=0.3,sigma=0.02]" in names
        assert all(not isinstance(e["gamma"], list) for e in out)

    def test_remote_prior_fails_fast_without_server(self):
        cfg = base_config()
        cfg["prior"] = {"type": "remote", "url": "http://127.0.0.1:9"}
        with pytest.raises(TransportError):
            run_experiment(ExperimentConfig.from_dict(cfg), out_dir="/tmp/x-no")

    def test_solver_error_marks_row_and_continues(self, tmp_path):
        cfg = base_config()
        # sigma far above the prior's trained range, strict mode
        cfg["strict_range"] = True
        cfg["methods"].append({"name": "bad", "method": "red", "K": 5,
                               "gamma": 0.5, "tau": 1.1, "sigma": 9.9})
        rep = run_experiment(ExperimentConfig.from_dict(cfg), out_dir=tmp_path)
        assert len(rep.failures) == 2  # one per image
        assert all(r.method == "bad" for r in rep.failures)
        ok_rows = [r for r in rep.rows if r.method == "dpir"]
        assert all(r.status == "ok" for r in ok_rows)


class TestReport:
    def test_aggregate_is_mean_of_rows(self, tmp_path):
        cfg = ExperimentConfig.from_dict(base_config())
        rep = run_experiment(cfg, out_dir=tmp_path)
        rows = [r for r in rep.rows if r.method == "dpir"]
        agg = rep.aggregate("dpir")
        assert agg[0] == pytest.approx(np.mean([r.psnr for r in rows]), abs=1e-9)

    def test_csv_deterministic_and_carries_provenance(self, tmp_path):
        cfg = ExperimentConfig.from_dict(base_config())
        rep1 = run_experiment(cfg, out_dir=tmp_path / "a")
        rep2 = run_experiment(cfg, out_dir=tmp_path / "b")
        a = (tmp_path / "a" / "report.csv").read_bytes()
        b = (tmp_path / "b" / "report.csv").read_bytes()
        assert a == b
        text = a.decode()
        assert "# config_sha256:" in text
        assert "# seed: 3" in text
        assert "# prior_note: desk-scale analytic prior" in text

    def test_inconsistent_aggregate_detected(self):
        rep = MetricsReport(rows=[
            CellResult("i", "m", 10.0, 0.5, 0.0),
        ])
        # tamper with the row after aggregation would be impossible through
        # the API; simulate by checking the consistency guard directly
        assert rep.aggregate("m")[0] == 10.0
        rep._check_aggregates()  # must not raise on consistent data


class TestKernels:
    def test_builtins_are_normalized(self):
        for name in ("motion-diag", "motion-curve", "box3"):
            k = builtin_kernel(name)
            assert k.raw_sum == pytest.approx(1.0, abs=1e-12)

    def test_unknown_builtin(self):
        with pytest.raises(ConfigError):
            builtin_kernel("gaussian-psf")


class TestCli:
    def test_run_and_exit_codes(self, tmp_path, capsys):
        cfg_path = tmp_path / "exp.json"
        cfg_path.write_text(json.dumps(base_config()))
        rc = main(["run", str(cfg_path), "--out-dir", str(tmp_path / "out")])
        assert rc == 0
        out = capsys.readouterr().out
        assert "measurement" in out and "dpir" in out
        assert (tmp_path / "out" / "report.csv").exists()

    def test_run_config_error_is_exit_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{}")
        assert main(["run", str(bad)]) == 2

    def test_transport_error_is_exit_4(self, tmp_path):
        cfg = base_config()
        cfg["prior"] = {"type": "remote", "url": "http://127.0.0.1:9"}
        p = tmp_path / "exp.json"
        p.write_text(json.dumps(cfg))
        assert main(["run", str(p), "--out-dir", str(tmp_path / "o")]) == 4

    def test_match_params_csv(self, tmp_path, capsys):
        from scorepnp import VESchedule, save_schedule

        sched_path = tmp_path / "sched.json"
        save_schedule(VESchedule(np.geomspace(0.05, 2.0, 10)), sched_path)
        rc = main(["match-params", "--schedule", str(sched_path),
                   "--sigmas", "0.1,0.5"])
        assert rc == 0
        out = capsys.readouterr().out.strip().split("\n")
        assert out[0] == "sigma_requested,c,t_cond,sigma_achieved"
        assert len(out) == 3
        first = out[1].split(",")
        assert float(first[0]) == 0.1
        assert float(first[1]) == 1.0  # VE: c == 1

    def test_denoise_roundtrip(self, tmp_path, capsys):
        from scorepnp import ImageTensor, save_image

        rng = np.random.default_rng(0)
        img_path = tmp_path / "in.png"
        save_image(ImageTensor(rng.random((16, 16, 1))), img_path)
        prior = tmp_path / "prior.json"
        prior.write_text(json.dumps({
            "type": "pixel-gmm", "weights": [1.0], "means": [0.5],
            "stds": [0.2], "convention": "ve",
            "sigma_min": 0.01, "sigma_max": 1.0, "T": 20}))
        out_path = tmp_path / "out.png"
        rc = main(["denoise", str(img_path), "--sigma", "0.1",
                   "--prior-config", str(prior), "--out", str(out_path)])
        assert rc == 0
        assert out_path.exists()

    def test_train_toy_score_cli(self, tmp_path):
        cfg = {
            "prior": {"weights": [0.5, 0.5],
                      "means": [[1.0, 0.6], [-1.0, -0.6]],
                      "covariances": [[[0.0625, 0], [0, 0.0625]],
                                      [[0.0625, 0], [0, 0.0625]]]},
            "n_samples": 12000, "convention": "ve",
            "sigma_min": 0.1, "sigma_max": 1.0, "T": 10,
            "steps": 400, "batch_size": 64, "lr": 0.002, "seed": 0,
        }
        p = tmp_path / "train.json"
        p.write_text(json.dumps(cfg))
        out = tmp_path / "net.ckpt"
        assert main(["train-toy-score", str(p), "--out", str(out)]) == 0
        from scorepnp import load_checkpoint

        net = load_checkpoint(out)
        assert net.convention == "ve"

    def test_verify_quick(self, capsys):
        assert main(["verify", "--quick"]) == 0
        out = capsys.readouterr().out
        assert out.count("[PASS]") == 6
        assert out.count("[SKIP]") == 2
