"""End-to-end command-line behavior, driven in-process through main(argv).

The compare goldens here pin the whole pipeline (PRNG draw order, file
round-trip, fixed-point engine, float oracle) for two canonical seeds.
"""

import filecmp
import json

import pytest

from famous.cli import _PERF_COLUMNS, main
from famous.fxp import QTensor
from famous.io import load_manifest, read_tensor, write_tensor


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture()
def corpus(tmp_path, capsys):
    """Seed-42 corpus, h=2 d_model=32 seq_len=8 (the narrow golden)."""
    out = tmp_path / "corpus"
    code = main(["gen", "--run", "h=2,d_model=32,seq_len=8",
                 "--design", "tile_size=32", "--seed", "42", "--out", str(out)])
    capsys.readouterr()
    assert code == 0
    return out


# ---------------------------------------------------------------- gen

def test_gen_writes_corpus(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "gen", "--run", "h=2,d_model=32,seq_len=8",
                           "--design", "tile_size=32", "--seed", "42",
                           "--out", str(tmp_path / "c"))
    assert code == 0
    assert "prng: numpy-pcg64 seed=42" in out
    assert "wrote 13 tensor files" in out
    d = tmp_path / "c"
    x = read_tensor(d / "x.famt")
    assert (x.rows, x.cols) == (8, 32)
    w_q = read_tensor(d / "head0_w_q.famt")
    assert (w_q.rows, w_q.cols) == (16, 32)
    b_q = read_tensor(d / "head1_b_q.famt")
    assert (b_q.rows, b_q.cols) == (1, 16)
    manifest = load_manifest(d / "manifest.json")
    assert manifest.run.h == 2
    assert manifest.seed == 42


def test_gen_is_deterministic(tmp_path, capsys):
    for name in ("a", "b"):
        code, _, _ = run_cli(capsys, "gen", "--run", "h=1,d_model=64,seq_len=4",
                             "--seed", "7", "--out", str(tmp_path / name))
        assert code == 0
    names = [p.name for p in sorted((tmp_path / "a").iterdir())]
    match, mismatch, errors = filecmp.cmpfiles(
        tmp_path / "a", tmp_path / "b", names, shallow=False)
    assert mismatch == [] and errors == []
    assert len(match) == 8  # x + 6 head tensors + manifest.json


def test_gen_rejects_invalid_run(tmp_path, capsys):
    code, _, err = run_cli(capsys, "gen", "--run", "h=5,d_model=768,seq_len=64",
                           "--out", str(tmp_path / "c"))
    assert code == 2
    assert "d_model mod h" in err


def test_gen_rejects_bad_design(tmp_path, capsys):
    code, _, err = run_cli(capsys, "gen", "--design", "tile_size=100",
                           "--out", str(tmp_path / "c"))
    assert code == 2
    assert "invalid configuration" in err


# ----------------------------------------------------------- simulate

def test_simulate_writes_output(corpus, capsys):
    code, out, _ = run_cli(capsys, "simulate", "--manifest", str(corpus / "manifest.json"))
    assert code == 0
    assert "run: h=2 d_model=32 seq_len=8 causal_mask=False d_k=16" in out
    assert "tiles: 1 x 32 columns" in out
    result = read_tensor(corpus / "out.famt")
    assert (result.rows, result.cols) == (8, 32)


def test_simulate_parallel_matches_serial(corpus, capsys, tmp_path):
    serial = tmp_path / "serial.famt"
    parallel = tmp_path / "parallel.famt"
    manifest = str(corpus / "manifest.json")
    assert main(["simulate", "--manifest", manifest, "--out", str(serial)]) == 0
    assert main(["simulate", "--manifest", manifest, "--out", str(parallel),
                 "--parallel"]) == 0
    capsys.readouterr()
    assert serial.read_bytes() == parallel.read_bytes()


def _manifest_with_commands(corpus, stream_text, name="manifest_cmds.json"):
    (corpus / "cmds.txt").write_text(stream_text)
    doc = json.loads((corpus / "manifest.json").read_text())
    del doc["run"]
    doc["commands"] = "cmds.txt"
    path = corpus / name
    path.write_text(json.dumps(doc))
    return path


def test_simulate_with_command_stream(corpus, capsys):
    m = _manifest_with_commands(
        corpus, "set-heads 2\nset-dmodel 32\nset-seqlen 8\nstart\n")
    code, out, _ = run_cli(capsys, "simulate", "--manifest", str(m))
    assert code == 0
    assert "run: h=2 d_model=32 seq_len=8" in out


def test_simulate_stream_without_start_is_io_error(corpus, capsys):
    m = _manifest_with_commands(corpus, "set-heads 2\n")
    code, _, err = run_cli(capsys, "simulate", "--manifest", str(m))
    assert code == 3
    assert "START" in err


def test_simulate_unknown_command_is_io_error(corpus, capsys):
    m = _manifest_with_commands(corpus, "warp 9\nstart\n")
    code, _, err = run_cli(capsys, "simulate", "--manifest", str(m))
    assert code == 3
    assert "unknown command" in err


def test_simulate_stream_breaking_envelope_is_invalid(corpus, capsys):
    m = _manifest_with_commands(corpus, "set-dmodel 100\nstart\n")
    code, _, err = run_cli(capsys, "simulate", "--manifest", str(m))
    assert code == 2
    assert "d_model mod tile_size" in err


def test_simulate_corrupt_tensor_is_io_error(corpus, capsys):
    (corpus / "x.famt").write_bytes(b"XAMT1 8 32 8 7 1\n" + bytes(8 * 32))
    code, _, err = run_cli(capsys, "simulate", "--manifest", str(corpus / "manifest.json"))
    assert code == 3
    assert "x.famt" in err


def test_simulate_shape_mismatch_is_invalid(corpus, capsys):
    write_tensor(corpus / "x.famt", QTensor.zeros(8, 16))
    code, _, err = run_cli(capsys, "simulate", "--manifest", str(corpus / "manifest.json"))
    assert code == 2


def test_missing_manifest_is_io_error(tmp_path, capsys):
    code, _, err = run_cli(capsys, "simulate", "--manifest", str(tmp_path / "nope.json"))
    assert code == 3


# ------------------------------------------------------------ compare

def test_compare_golden_narrow(corpus, capsys):
    code, out, _ = run_cli(capsys, "compare", "--manifest", str(corpus / "manifest.json"))
    assert code == 0
    assert "max_abs_error: 4.66876" in out
    assert "mean_abs_error: 1.12942" in out
    assert "head 0: max 4.66876" in out
    assert "threshold: 8 -> PASS" in out


def test_compare_golden_wide(tmp_path, capsys):
    out_dir = tmp_path / "c2"
    assert main(["gen", "--run", "h=4,d_model=64,seq_len=16", "--seed", "42",
                 "--out", str(out_dir)]) == 0
    capsys.readouterr()
    code, out, _ = run_cli(capsys, "compare", "--manifest", str(out_dir / "manifest.json"))
    assert code == 0
    assert "max_abs_error: 7.48031" in out
    assert "mean_abs_error: 1.71446" in out
    assert sum(line.startswith("head ") for line in out.splitlines()) == 4


def test_compare_threshold_failure(corpus, capsys):
    code, out, _ = run_cli(capsys, "compare", "--manifest", str(corpus / "manifest.json"),
                           "--threshold", "0.001")
    assert code == 1
    assert "-> FAIL" in out


def test_compare_threshold_from_manifest(corpus, capsys):
    doc = json.loads((corpus / "manifest.json").read_text())
    doc["threshold"] = 0.001
    m = corpus / "manifest_t.json"
    m.write_text(json.dumps(doc))
    assert main(["compare", "--manifest", str(m)]) == 1
    capsys.readouterr()
    # the command-line flag beats the manifest
    assert main(["compare", "--manifest", str(m), "--threshold", "100"]) == 0
    capsys.readouterr()


# --------------------------------------------------------------- perf

ANCHOR_CSV = "64,768,8,64,0.239075328,376000,0.94,254.335455,4157,3148,1284782,661996"


def test_perf_anchor_csv(capsys):
    code, out, _ = run_cli(capsys, "perf", "--run", "h=8,d_model=768,seq_len=64",
                           "--format", "csv")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == ",".join(_PERF_COLUMNS)
    assert lines[1] == ANCHOR_CSV


def test_perf_csv_byte_stable(capsys):
    argv = ["perf", "--run", "h=8,d_model=768,seq_len=64", "--format", "csv"]
    assert main(argv) == 0
    first = capsys.readouterr().out
    assert main(argv) == 0
    assert capsys.readouterr().out == first


def test_perf_table_format(capsys):
    code, out, _ = run_cli(capsys, "perf", "--run", "h=8,d_model=768,seq_len=64")
    assert code == 0
    header, row = out.splitlines()
    assert header.split() == list(_PERF_COLUMNS)
    assert row.split()[5] == "376000"


def test_perf_sweep_h(capsys):
    code, out, _ = run_cli(capsys, "perf", "--run", "h=8,d_model=768,seq_len=64",
                           "--sweep-h", "8,4,2", "--format", "csv")
    assert code == 0
    rows = [line.split(",") for line in out.splitlines()[1:]]
    assert [r[2] for r in rows] == ["8", "4", "2"]
    latency = [float(r[6]) for r in rows]
    assert latency[0] < latency[1] < latency[2]


def test_perf_multiple_runs(capsys):
    code, out, _ = run_cli(capsys, "perf",
                           "--run", "h=8,d_model=768,seq_len=64",
                           "--run", "h=8,d_model=768,seq_len=128",
                           "--format", "csv")
    assert code == 0
    assert len(out.splitlines()) == 3


def test_perf_custom_calibration(tmp_path, capsys):
    cal = tmp_path / "cal.txt"
    cal.write_text("mem_bytes_per_cycle = 4\npipeline_depth = 32\n"
                   "softmax_cycles_per_row = 100\n")
    code, out, _ = run_cli(capsys, "perf", "--calibration", str(cal),
                           "--run", "h=8,d_model=768,seq_len=64", "--format", "csv")
    assert code == 0
    cycles = int(out.splitlines()[1].split(",")[5])
    assert cycles == 376000 - 64 * 3500 + 64 * 100


def test_perf_invalid_run(capsys):
    code, _, err = run_cli(capsys, "perf", "--run", "h=16,d_model=768,seq_len=64")
    assert code == 2
    assert "max_heads" in err


# ---------------------------------------------------------------- dse

def test_dse_filters_and_ranks(capsys):
    code, out, _ = run_cli(capsys, "dse", "--ts", "32,64,128", "--heads", "8",
                           "--run", "h=8,d_model=768,seq_len=64", "--format", "csv")
    assert code == 0
    rows = [line.split(",") for line in out.splitlines()[1:]]
    # 128 blows the LUT budget; 64 beats 32 on latency
    assert [r[3] for r in rows] == ["64", "32"]
    assert rows[0][6] == "0.94"


def test_dse_infeasible_budget(capsys):
    code, _, err = run_cli(capsys, "dse", "--ts", "64", "--heads", "8",
                           "--budget", "dsp=1,bram18k=1,lut=1,ff=1")
    assert code == 1
    assert "no feasible configuration" in err
