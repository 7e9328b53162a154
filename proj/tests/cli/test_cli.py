import hashlib
import http.server
import io
import json
import os
import pathlib
import socket
import subprocess
import threading
import time
import urllib.request

import jsonschema
import pytest
import referencing
from PIL import Image

BIN = os.environ["ARTBRAIN_BIN"]
SCHEMAS = pathlib.Path(os.environ["ARTBRAIN_SCHEMAS"])


def run(*args, env=None, check=None):
    full_env = dict(os.environ)
    full_env.pop("ARTBRAIN_WEIGHTS", None)
    full_env.update(env or {})
    proc = subprocess.run([BIN, *map(str, args)], capture_output=True, text=True, env=full_env, timeout=600)
    if check is not None:
        assert proc.returncode == check, proc.stdout + proc.stderr
    return proc


def run_json(*args, **kw):
    proc = run(*args, "--json", check=0, **kw)
    return json.loads(proc.stdout)


@pytest.fixture(scope="session")
def registry():
    resources = []
    for path in SCHEMAS.glob("*.schema.json"):
        schema = json.loads(path.read_text())
        resources.append((schema["$id"], referencing.Resource.from_contents(schema)))
    return referencing.Registry().with_resources(resources)


def validate(registry, name, doc):
    schema = json.loads((SCHEMAS / f"{name}.schema.json").read_text())
    jsonschema.Draft202012Validator(schema, registry=registry).validate(doc)


def tree_digest(root):
    root = pathlib.Path(root)
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


@pytest.fixture(scope="session")
def work(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="session")
def toy(work, registry):
    out = work / "toy"
    doc = run_json("dataset", "synth", "--out", out, "--sources", 3, "--styles", 2, "--train", 8, "--test", 4,
                   "--seed", 7)
    validate(registry, "dataset-synth", doc)
    return out


@pytest.fixture(scope="session")
def trained(work, toy, registry):
    weights = work / "toy.acnx"
    doc = run_json("train", "--data", toy, "--out", weights, "--epochs", 3, "--batch", 8, "--hidden", 32,
                   "--seed", 3, "--test-as-validation", "--threads", 1)
    validate(registry, "train", doc)
    return weights, doc


@pytest.fixture(scope="session")
def image(work):
    path = work / "probe.png"
    img = Image.new("RGB", (90, 70))
    img.putdata([((x * 7) % 256, (y * 11) % 256, (x * y) % 256) for y in range(70) for x in range(90)])
    img.save(path)
    return path


def test_help_lists_every_subcommand():
    proc = run("--help", check=0)
    for sub in ["train", "eval", "predict", "saliency", "dataset", "generate", "serve"]:
        assert sub in proc.stdout
    dataset = run("dataset", "--help", check=0)
    assert "validate" in dataset.stdout and "synth" in dataset.stdout
    for sub in [["train"], ["eval"], ["predict"], ["saliency"], ["dataset", "validate"], ["dataset", "synth"],
                ["generate"], ["serve"]]:
        assert "Usage" in run(*sub, "--help", check=0).stdout


def test_usage_errors_exit_2(image, trained):
    weights, _ = trained
    assert run("predict", "--image", image, "--weights", weights, "--bogus").returncode == 2
    assert run("predict", "--weights", weights).returncode == 2
    assert run("predict", "--image", image, "--weights", weights, "--top-k", 31).returncode == 2
    assert run("predict", "--image", image, "--weights", weights, "--contrast", 101).returncode == 2
    assert run("nonsense").returncode == 2
    assert run().returncode == 2


def test_domain_errors_exit_1_with_structured_message(work, image, registry):
    proc = run("predict", "--image", image, "--weights", work / "missing.acnx", "--json")
    assert proc.returncode == 1
    doc = json.loads(proc.stdout)
    validate(registry, "error", doc)
    assert doc["error"]["kind"] == "io"
    assert "error" in proc.stderr

    garbage = work / "garbage.acnx"
    garbage.write_bytes(b"not an archive")
    doc = json.loads(run("predict", "--image", image, "--weights", garbage, "--json", check=1).stdout)
    validate(registry, "error", doc)

    proc = run("predict", "--image", image, "--json")
    assert proc.returncode == 1
    assert json.loads(proc.stdout)["error"]["kind"] == "argument"


def test_predict_top3_json(image, trained, registry):
    weights, _ = trained
    doc = run_json("predict", "--image", image, "--weights", weights, "--top-k", 3)
    validate(registry, "predict", doc)
    assert len(doc["top"]) == 3
    assert abs(sum(doc["probs"]) - 1) < 1e-6
    probs = [e["probability"] for e in doc["top"]]
    assert probs == sorted(probs, reverse=True)
    assert doc["config"]["options"]["top-k"] == "3"


def test_weights_from_environment(image, trained):
    weights, _ = trained
    direct = run_json("predict", "--image", image, "--weights", weights)
    via_env = run_json("predict", "--image", image, env={"ARTBRAIN_WEIGHTS": str(weights)})
    assert direct["top"] == via_env["top"]


def test_contrast_sweep(image, trained, registry):
    weights, _ = trained
    doc = run_json("predict", "--image", image, "--weights", weights, "--contrast-sweep", "-100:100:25")
    validate(registry, "predict", doc)
    assert [row["contrast_percent"] for row in doc["sweep"]] == [-100 + 25 * i for i in range(9)]
    single = run_json("predict", "--image", image, "--weights", weights, "--contrast", -50)
    assert single["probs"] == doc["sweep"][2]["probs"]
    text = run("predict", "--image", image, "--weights", weights, "--contrast-sweep", "-100:100:50", check=0)
    assert len([l for l in text.stdout.splitlines() if not l.startswith("#")]) == 6
    assert run("predict", "--image", image, "--weights", weights, "--contrast-sweep", "5:1:1").returncode == 1


def test_saliency_matches_predict(work, image, trained, registry):
    weights, _ = trained
    out = work / "overlay.png"
    doc = run_json("saliency", "--image", image, "--weights", weights, "--out", out)
    validate(registry, "saliency", doc)
    pred = run_json("predict", "--image", image, "--weights", weights)
    assert [e["class_index"] for e in doc["legend"]] == [e["class_index"] for e in pred["top"]]
    with Image.open(out) as img:
        assert img.size == (doc["width"], doc["height"])
    one = run_json("saliency", "--image", image, "--weights", weights, "--out", work / "one.png", "-k", 1)
    assert len(one["legend"]) == 1


def test_synth_twice_gives_identical_trees(work):
    a, b = work / "synth_a", work / "synth_b"
    args = ["--sources", 3, "--styles", 2, "--train", 100, "--test", 25, "--seed", 7]
    run("dataset", "synth", "--out", a, *args, check=0)
    run("dataset", "synth", "--out", b, *args, check=0)
    da, db = tree_digest(a), tree_digest(b)
    assert len([k for k in da if k.endswith(".jpg")]) == 3 * 2 * 125
    assert da == db


def test_echoed_config_reproduces_synth(work):
    first = run_json("dataset", "synth", "--out", work / "echo_a", "--styles", "baroque,realism", "--train", 3,
                     "--test", 2, "--seed", 11)
    args = []
    for key, value in first["config"]["options"].items():
        if key in ("json", "out") or value is None:
            continue
        args += [f"--{key}", value]
    run("dataset", "synth", "--out", work / "echo_b", *args, check=0)
    assert tree_digest(work / "echo_a") == tree_digest(work / "echo_b")


def test_validate_reports_issues(work, toy, registry):
    doc = run_json("dataset", "validate", "--data", toy, "--sidecar", "--decode")
    validate(registry, "dataset-validate", doc)
    assert doc["ok"]
    assert doc["manifest"]["totals"]["train"]["all"] == 3 * 2 * 8

    broken = work / "broken"
    (broken / "train" / "cubism").mkdir(parents=True)
    (broken / "train" / "cubism" / "x.jpg").write_bytes(b"junk")
    proc = run("dataset", "validate", "--data", broken, "--json")
    assert proc.returncode == 1
    doc = json.loads(proc.stdout)
    validate(registry, "dataset-validate", doc)
    assert not doc["ok"]
    assert "unknown_folder" in {i["kind"] for i in doc["manifest"]["issues"]}

    text = run("dataset", "validate", "--data", toy, "--published", check=1)
    assert "published mismatch" in text.stdout


def test_eval_matches_train_validation(toy, trained, registry):
    weights, train_doc = trained
    doc = run_json("eval", "--weights", weights, "--data", toy, "--split", "test")
    validate(registry, "eval", doc)
    selected = train_doc["selected"]
    assert train_doc["selected_epoch"] == selected["epoch"]
    assert doc["report"]["samples"] == 3 * 2 * 4
    assert doc["report"]["classes"]["accuracy"] == pytest.approx(selected["val_accuracy"], abs=1e-12)
    assert doc["report"]["attribution"]["accuracy"] == pytest.approx(selected["val_source_accuracy"], abs=1e-12)
    assert doc["report"]["styles"]["accuracy"] == pytest.approx(selected["val_style_accuracy"], abs=1e-12)
    assert doc["model_version"] == train_doc["model_version"]


def test_train_is_reproducible(work, toy, trained):
    weights, doc = trained
    again = work / "again.acnx"
    second = run_json("train", "--data", toy, "--out", again, "--epochs", 3, "--batch", 8, "--hidden", 32,
                      "--seed", 3, "--test-as-validation", "--threads", 1)
    assert second["history"] == doc["history"]
    assert again.read_bytes() == weights.read_bytes()
    assert [r["epoch"] for r in doc["history"]] == [1, 2, 3]
    assert doc["config"]["train"]["initial_lr"] == 0.001
    assert doc["config"]["train"]["lr_factor"] == 0.1
    assert doc["config"]["train"]["patience_epochs"] == 2


class FakeGenerator(http.server.BaseHTTPRequestHandler):
    requests = []

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        FakeGenerator.requests.append(body)
        buf = io.BytesIO()
        Image.new("RGB", (body["width"], body["height"]), (body["seed"] % 256, 80, 160)).save(buf, "PNG")
        data = buf.getvalue()
        self.send_response(200)
        self.send_header("Content-Type", "image/png")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


def test_generate_against_fake_service(work, registry):
    dry = run_json("generate", "--out", work / "gen", "--dry-run", "--model", "both", "--styles", "baroque",
                   "--count", 2, "--seed", 4)
    validate(registry, "generate", dry)
    assert len(dry["jobs"]) == 4

    server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), FakeGenerator)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        endpoint = f"http://127.0.0.1:{server.server_address[1]}"
        args = ["generate", "--endpoint", endpoint, "--out", work / "gen", "--model", "both", "--styles", "baroque",
                "--count", 2, "--seed", 4]
        doc = run_json(*args)
        validate(registry, "generate", doc)
        assert doc["written"] == 4 and doc["ok"]
        assert sorted(r["seed"] for r in FakeGenerator.requests) == sorted(j["seed"] for j in dry["jobs"])
        again = run_json(*args)
        assert again["skipped"] == 4
        assert len(FakeGenerator.requests) == 4
    finally:
        server.shutdown()
    assert run("generate", "--out", work / "gen2", "--count", 1).returncode == 1


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_serve_health(work, trained):
    weights, train_doc = trained
    port = free_port()
    proc = subprocess.Popen([BIN, "serve", "--weights", str(weights), "--port", str(port), "--state-dir",
                             str(work / "state")], stdout=subprocess.PIPE, stderr=subprocess.PIPE)
    try:
        deadline = time.time() + 30
        while True:
            try:
                with urllib.request.urlopen(f"http://127.0.0.1:{port}/api/health", timeout=2) as r:
                    health = json.loads(r.read())
                break
            except OSError:
                assert time.time() < deadline and proc.poll() is None
                time.sleep(0.1)
        assert health["status"] == "ok"
        assert health["model_version"] == train_doc["model_version"]
    finally:
        proc.terminate()
        proc.wait(timeout=10)
