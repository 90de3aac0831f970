import json
import threading
import urllib.error
import urllib.request

import numpy as np
import pytest

from layoutforge.cli import main
from layoutforge.config import ConfigError, load_config
from layoutforge.denoiser import init_params
from layoutforge.diffusion import build_schedule
from layoutforge.server import StudioApp, make_server


class TestConfig:
    def test_defaults_without_file(self):
        cfg = load_config(None)
        assert cfg.schedule_args() == (200, 1e-4, 0.02)
        assert cfg.train_config().batch_size == 64
        assert cfg.rule_config().tau_snap == 0.02

    def test_override_subset(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"schedule": {"T": 40}, "train": {"epochs": 2}}))
        cfg = load_config(str(path))
        assert cfg.schedule_args()[0] == 40
        assert cfg.train_config().epochs == 2
        assert cfg.train_config().batch_size == 64  # untouched default

    def test_unknown_key_names_path(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"train": {"learning_rat": 0.1}}))
        with pytest.raises(ConfigError, match="train.learning_rat"):
            load_config(str(path))

    def test_unknown_top_level_key(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"trian": {}}))
        with pytest.raises(ConfigError, match="trian"):
            load_config(str(path))

    def test_type_mismatch(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"server": {"port": "eighty"}}))
        with pytest.raises(ConfigError, match="server.port"):
            load_config(str(path))

    def test_missing_file(self):
        with pytest.raises(ConfigError, match="/nowhere/cfg.json"):
            load_config("/nowhere/cfg.json")

    def test_env_var_path(self, tmp_path, monkeypatch):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"schedule": {"T": 33}}))
        monkeypatch.setenv("LAYOUTFORGE_CONFIG", str(path))
        assert load_config().schedule_args()[0] == 33

    def test_unsupported_net_dims(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"net": {"hidden": 128}}))
        with pytest.raises(ConfigError, match="net dims"):
            load_config(str(path))


@pytest.fixture(scope="module")
def tiny_env(tmp_path_factory):
    """Config, corpus, and trained weights shared by the CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    cfg_path = root / "cfg.json"
    cfg_path.write_text(
        json.dumps(
            {
                "schedule": {"T": 30},
                "train": {"epochs": 1, "batch_size": 32},
                "eval": {"max_items": 24},
            }
        )
    )
    corpus_path = root / "corpus.jsonl"
    assert main(["synth", "--n", "160", "--seed", "7", "--split-ratio", "0.8",
                 "--out", str(corpus_path)]) == 0
    weights_path = root / "w.bin"
    assert main(["train", "--config", str(cfg_path), "--corpus", str(corpus_path),
                 "--out", str(weights_path)]) == 0
    return {"root": root, "cfg": str(cfg_path), "corpus": str(corpus_path), "weights": str(weights_path)}


class TestCli:
    def test_missing_config_exits_1_naming_path(self, capsys):
        code = main(["train", "--config", "/nowhere/missing.json", "--synth-n", "64", "--out", "/tmp/x.bin"])
        assert code == 1
        assert "/nowhere/missing.json" in capsys.readouterr().err

    def test_unknown_flag_exits_1_with_usage(self, capsys):
        code = main(["sample", "--weights", "w", "--seed", "1", "--frobnicate"])
        assert code == 1
        err = capsys.readouterr().err
        assert "usage" in err

    def test_unknown_command_exits_1(self):
        assert main(["transmogrify"]) == 1

    def test_train_prints_epoch_lines(self, tiny_env, capsys, tmp_path):
        out = tmp_path / "w2.bin"
        code = main(["train", "--config", tiny_env["cfg"], "--corpus", tiny_env["corpus"],
                     "--out", str(out)])
        assert code == 0
        lines = capsys.readouterr().out.splitlines()
        assert any(line.startswith("epoch 1 loss ") for line in lines)

    def test_train_determinism_byte_identical(self, tiny_env, tmp_path):
        a, b = tmp_path / "a.bin", tmp_path / "b.bin"
        assert main(["train", "--config", tiny_env["cfg"], "--corpus", tiny_env["corpus"], "--out", str(a)]) == 0
        assert main(["train", "--config", tiny_env["cfg"], "--corpus", tiny_env["corpus"], "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_train_without_data_exits_2(self, tiny_env, capsys):
        assert main(["train", "--config", tiny_env["cfg"], "--out", "/tmp/w.bin"]) == 2

    def test_missing_corpus_file_exits_2(self, tiny_env):
        assert main(["train", "--config", tiny_env["cfg"], "--corpus", "/nope.jsonl",
                     "--out", "/tmp/w.bin"]) == 2

    def test_sample_deterministic_files(self, tiny_env, tmp_path):
        l1, l2 = tmp_path / "l1.json", tmp_path / "l2.json"
        args = ["sample", "--config", tiny_env["cfg"], "--weights", tiny_env["weights"],
                "--prompt", "login dark", "--seed", "42"]
        assert main(args + ["--out", str(l1)]) == 0
        assert main(args + ["--out", str(l2)]) == 0
        assert l1.read_bytes() == l2.read_bytes()
        doc = json.loads(l1.read_text())
        assert "components" in doc and doc["canvas"] == [144, 256]

    def test_sample_rasters(self, tiny_env, tmp_path):
        png = tmp_path / "r.png"
        ppm = tmp_path / "r.ppm"
        base = ["sample", "--config", tiny_env["cfg"], "--weights", tiny_env["weights"],
                "--prompt", "list", "--seed", "3"]
        assert main(base + ["--out", str(tmp_path / "l.json"), "--raster", str(png)]) == 0
        assert main(base + ["--out", str(tmp_path / "l2.json"), "--raster", str(ppm)]) == 0
        assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
        assert ppm.read_bytes().startswith(b"P6\n")

    def test_missing_weights_exits_2(self, tiny_env):
        assert main(["sample", "--config", tiny_env["cfg"], "--weights", "/nope.bin",
                     "--seed", "1"]) == 2

    def test_eval_identity_stub_oracle(self, tiny_env, tmp_path, capsys):
        report_path = tmp_path / "rep.json"
        code = main(["eval", "--config", tiny_env["cfg"], "--corpus", tiny_env["corpus"],
                     "--stub", "identity", "--out", str(report_path)])
        assert code == 0
        report = json.loads(report_path.read_text())
        assert report["psnr_db"]["mean"] == 100.0
        assert report["ssim"]["mean"] == pytest.approx(1.0)

    def test_eval_deterministic_report_bytes(self, tiny_env, tmp_path):
        r1, r2 = tmp_path / "r1.json", tmp_path / "r2.json"
        base = ["eval", "--config", tiny_env["cfg"], "--corpus", tiny_env["corpus"],
                "--weights", tiny_env["weights"], "--seed", "5"]
        assert main(base + ["--out", str(r1)]) == 0
        assert main(base + ["--out", str(r2)]) == 0
        assert r1.read_bytes() == r2.read_bytes()

    def test_eval_csv_and_table(self, tiny_env, tmp_path):
        csv_path, table_path = tmp_path / "rows.csv", tmp_path / "table.txt"
        assert main(["eval", "--config", tiny_env["cfg"], "--corpus", tiny_env["corpus"],
                     "--stub", "identity", "--csv", str(csv_path), "--table", str(table_path)]) == 0
        header = csv_path.read_text().splitlines()[0]
        assert header == "index,seed,psnr_db,ssim,alignment,violations"
        assert "PSNR" in table_path.read_text()

    def test_ablate_outputs_table2_labels(self, tiny_env, tmp_path, capsys):
        out_dir = tmp_path / "abl"
        code = main(["ablate", "--config", tiny_env["cfg"], "--corpus", tiny_env["corpus"],
                     "--epochs", "1", "--out-dir", str(out_dir)])
        assert code == 0
        table = (out_dir / "ablation.txt").read_text()
        for label in ("Full Model (Ours)", "Without Conditional Inputs",
                      "Without Design Optimization", "Without Feedback Mechanism"):
            assert label in table
        rows = json.loads((out_dir / "ablation.json").read_text())
        assert len(rows) == 4


def _call(port, method, path, body=None):
    req = urllib.request.Request(
        f"http://127.0.0.1:{port}{path}",
        method=method,
        data=json.dumps(body).encode() if body is not None else None,
        headers={"Content-Type": "application/json"},
    )
    try:
        with urllib.request.urlopen(req, timeout=30) as resp:
            return resp.status, json.loads(resp.read())
    except urllib.error.HTTPError as exc:
        return exc.code, json.loads(exc.read())


@pytest.fixture(scope="module")
def server_port(tmp_path_factory):
    static_dir = tmp_path_factory.mktemp("static")
    (static_dir / "index.html").write_text("<html>studio</html>")
    app = StudioApp(
        init_params(0, T=30),
        build_schedule(30, 1e-4, 0.02),
        static_dir=str(static_dir),
        model_version="test-1",
    )
    server = make_server(app)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield server.server_address[1]
    server.shutdown()


class TestServer:
    def test_health(self, server_port):
        assert _call(server_port, "GET", "/health") == (200, {"status": "ok"})

    def test_vocab(self, server_port):
        status, doc = _call(server_port, "GET", "/api/vocab")
        assert status == 200
        assert doc["sketch_grid"] == [8, 8]
        assert len(doc["vocab"]) == 32

    def test_generate_deterministic(self, server_port):
        body = {"prompt": "login dark", "seed": 42, "sketch": [0.0] * 64}
        s1, d1 = _call(server_port, "POST", "/api/generate", body)
        s2, d2 = _call(server_port, "POST", "/api/generate", body)
        assert s1 == s2 == 200
        assert d1["layout"] == d2["layout"]
        assert d1["model_version"] == "test-1"
        assert set(d1["rule_report"]) == {"alignment_score", "spacing_violations", "harmony", "penalty"}
        assert d1["sample_time_ms"] > 0

    def test_generate_validation_errors(self, server_port):
        status, err = _call(server_port, "POST", "/api/generate", {"seed": 1, "sketch": [0.5] * 63})
        assert status == 400 and err["field"] == "sketch"
        status, err = _call(server_port, "POST", "/api/generate", {"seed": 1, "sketch": [2.0] + [0.0] * 63})
        assert status == 400 and err["field"] == "sketch[0]"
        status, err = _call(server_port, "POST", "/api/generate", {"prompt": "x"})
        assert status == 400 and err["field"] == "seed"
        status, err = _call(server_port, "POST", "/api/generate", {"seed": "42"})
        assert status == 400 and err["field"] == "seed"
        status, err = _call(server_port, "POST", "/api/generate", {"seed": 1, "projection": "yes"})
        assert status == 400 and err["field"] == "projection"

    def test_refine_pins_component_zero(self, server_port):
        _, gen = _call(server_port, "POST", "/api/generate", {"prompt": "list", "seed": 9})
        layout = gen["layout"]
        status, ref = _call(server_port, "POST", "/api/refine",
                            {"layout": layout, "pinned": [0], "seed": 11})
        assert status == 200
        orig0 = layout["components"][0]
        got0 = ref["layout"]["components"][0]
        assert got0["type"] == orig0["type"]
        assert got0["visible"] == orig0["visible"]
        assert abs(got0["cx"] - orig0["cx"]) < 1e-6
        assert abs(got0["w"] - orig0["w"]) < 1e-6

    def test_refine_validation_errors(self, server_port):
        status, err = _call(server_port, "POST", "/api/refine", {"pinned": [], "seed": 1})
        assert status == 400 and err["field"] == "layout"
        _, gen = _call(server_port, "POST", "/api/generate", {"prompt": "list", "seed": 9})
        status, err = _call(server_port, "POST", "/api/refine",
                            {"layout": gen["layout"], "pinned": [99], "seed": 1})
        assert status == 400 and err["field"] == "pinned[0]"
        status, err = _call(server_port, "POST", "/api/refine",
                            {"layout": gen["layout"], "pinned": [], "seed": 1, "t_start": 99})
        assert status == 400 and err["field"] == "t_start"

    def test_malformed_json_body(self, server_port):
        req = urllib.request.Request(
            f"http://127.0.0.1:{server_port}/api/generate",
            method="POST",
            data=b"{oops",
            headers={"Content-Type": "application/json"},
        )
        try:
            urllib.request.urlopen(req, timeout=30)
            status = 200
        except urllib.error.HTTPError as exc:
            status = exc.code
            doc = json.loads(exc.read())
        assert status == 400 and "error" in doc

    def test_unknown_route_404(self, server_port):
        status, err = _call(server_port, "GET", "/api/unknown")
        assert status == 404 and err == {"error": "not found"}
        status, err = _call(server_port, "POST", "/api/unknown", {})
        assert status == 404

    def test_static_serving(self, server_port):
        with urllib.request.urlopen(f"http://127.0.0.1:{server_port}/", timeout=30) as resp:
            assert resp.status == 200
            assert b"studio" in resp.read()

    def test_static_traversal_blocked(self, server_port):
        status, _ = _call(server_port, "GET", "/../cfg.json")
        assert status == 404

    def test_server_never_mutates_weights(self):
        params = init_params(0, T=30)
        before = {name: arr.copy() for name, arr in params.param_items()}
        app = StudioApp(params, build_schedule(30, 1e-4, 0.02))
        server = make_server(app)
        port = server.server_address[1]
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        try:
            _call(port, "POST", "/api/generate", {"prompt": "list", "seed": 3})
            _, gen = _call(port, "POST", "/api/generate", {"prompt": "login", "seed": 4})
            _call(port, "POST", "/api/refine", {"layout": gen["layout"], "pinned": [], "seed": 5})
        finally:
            server.shutdown()
        for name, arr in params.param_items():
            assert np.array_equal(arr, before[name])

    def test_concurrent_requests_independent(self, server_port):
        results = {}

        def worker(seed):
            _, doc = _call(server_port, "POST", "/api/generate", {"prompt": "list", "seed": seed})
            results[seed] = doc["layout"]

        threads = [threading.Thread(target=worker, args=(s,)) for s in (1, 2, 3, 1)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        _, ref = _call(server_port, "POST", "/api/generate", {"prompt": "list", "seed": 1})
        assert results[1] == ref["layout"]
        assert results[1] != results[2]
