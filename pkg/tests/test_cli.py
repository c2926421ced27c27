import numpy as np

from kllq.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def write_stream(path, values):
    path.write_text("".join(f"{v}\n" for v in values))


def test_build_query_roundtrip_exact(tmp_path, capsys):
    data = tmp_path / "d.txt"
    sk = tmp_path / "s.kll"
    write_stream(data, range(1, 101))
    code, _out, err = run(capsys, "build", "--budget", "512",
                          "--in", str(data), "--out", str(sk))
    assert code == 0
    assert "n=100" in err and "H=" in err and "compactions=" in err
    code, out, _ = run(capsys, "query", "--sketch", str(sk),
                       "--quantiles", "0,0.5,1")
    assert code == 0
    assert out.split() == ["1.0", "50.0", "100.0"]
    code, out, _ = run(capsys, "query", "--sketch", str(sk),
                       "--ranks", "50.5")
    assert code == 0 and out.strip() == "0.5"


def test_build_usage_error_exit_1(tmp_path, capsys):
    data = tmp_path / "d.txt"
    write_stream(data, [1])
    code, _out, _err = run(capsys, "build", "--variant", "2111",
                           "--in", str(data), "--out", str(tmp_path / "x"))
    assert code == 1


def test_build_parse_error_exit_2(tmp_path, capsys):
    data = tmp_path / "d.txt"
    data.write_text("1.5\nnot-a-number\n")
    code, _out, err = run(capsys, "build", "--in", str(data),
                          "--out", str(tmp_path / "x.kll"))
    assert code == 2
    assert "line 2" in err


def test_missing_input_exit_2(tmp_path, capsys):
    code, _out, _err = run(capsys, "build", "--in", str(tmp_path / "nope"),
                           "--out", str(tmp_path / "x.kll"))
    assert code == 2


def test_info(tmp_path, capsys):
    data = tmp_path / "d.txt"
    sk = tmp_path / "s.kll"
    write_stream(data, range(50))
    run(capsys, "build", "--budget", "128", "--variant", "0101",
        "--in", str(data), "--out", str(sk))
    code, out, _ = run(capsys, "info", str(sk))
    assert code == 0
    assert "variant=0101" in out and "budget=128" in out and "mode=plain" in out


def test_merge_three_shards(tmp_path, capsys):
    rng = np.random.default_rng(0)
    values = rng.permutation(3000) + 1
    paths = []
    for i in range(3):
        d = tmp_path / f"d{i}.txt"
        write_stream(d, values[i::3])
        s = tmp_path / f"s{i}.kll"
        run(capsys, "build", "--budget", "256", "--seed", str(i),
            "--in", str(d), "--out", str(s))
        paths.append(str(s))
    merged = tmp_path / "m.kll"
    code, _out, _err = run(capsys, "merge", "--out", str(merged), *paths)
    assert code == 0
    code, out, _ = run(capsys, "query", "--sketch", str(merged),
                       "--ranks", "1500.5")
    assert code == 0
    assert abs(float(out) - 0.5) < 0.05


def test_merge_mismatch_exit_2(tmp_path, capsys):
    d = tmp_path / "d.txt"
    write_stream(d, range(10))
    a, b = tmp_path / "a.kll", tmp_path / "b.kll"
    run(capsys, "build", "--variant", "1111", "--in", str(d), "--out", str(a))
    run(capsys, "build", "--variant", "0000", "--in", str(d), "--out", str(b))
    code, _out, err = run(capsys, "merge", "--out", str(tmp_path / "m.kll"),
                          str(a), str(b))
    assert code == 2
    assert "flags" in err


def test_weighted_build_and_query(tmp_path, capsys):
    tsv = tmp_path / "w.tsv"
    tsv.write_text("97\t4.0\n1\t1.0\n1\t2.0\n1\t3.0\n")
    sk = tmp_path / "w.kll"
    code, _out, _err = run(capsys, "build", "--weighted", "base2",
                           "--in", str(tsv), "--out", str(sk))
    assert code == 0
    code, out, _ = run(capsys, "query", "--sketch", str(sk),
                       "--quantiles", "0.5")
    assert code == 0 and out.strip() == "4.0"
    # weight-aware mode too
    sk2 = tmp_path / "w2.kll"
    code, _out, _err = run(capsys, "build", "--weighted", "weight-aware",
                           "--in", str(tsv), "--out", str(sk2))
    assert code == 0
    code, out, _ = run(capsys, "query", "--sketch", str(sk2),
                       "--quantiles", "0.5")
    assert code == 0 and out.strip() == "4.0"


def test_string_codec_cli(tmp_path, capsys):
    d = tmp_path / "d.txt"
    d.write_text("pear\napple\nfig\n")
    sk = tmp_path / "s.kll"
    code, _out, _err = run(capsys, "build", "--codec", "string",
                           "--in", str(d), "--out", str(sk))
    assert code == 0
    code, out, _ = run(capsys, "query", "--sketch", str(sk),
                       "--quantiles", "0,1")
    assert code == 0
    assert out.split() == ["apple", "pear"]


def test_eval_command_csv(tmp_path, capsys):
    out_csv = tmp_path / "r.csv"
    code, _out, _err = run(capsys, "eval", "--variants", "0000,1111",
                           "--budgets", "64,128", "--streams", "shuffled",
                           "--n", "5000", "--trials", "2",
                           "--out", str(out_csv))
    assert code == 0
    lines = out_csv.read_text().strip().splitlines()
    assert len(lines) == 5  # header + 2 variants x 2 budgets
    assert lines[0].startswith("variant,budget,stream_kind")


def test_query_empty_sketch_ranks_zero(tmp_path, capsys):
    d = tmp_path / "d.txt"
    d.write_text("")
    sk = tmp_path / "s.kll"
    run(capsys, "build", "--in", str(d), "--out", str(sk))
    code, out, _ = run(capsys, "query", "--sketch", str(sk), "--ranks", "1,2")
    assert code == 0
    assert out.split() == ["0", "0"]


def test_cdf_query(tmp_path, capsys):
    d = tmp_path / "d.txt"
    write_stream(d, range(1, 11))
    sk = tmp_path / "s.kll"
    run(capsys, "build", "--in", str(d), "--out", str(sk))
    qf = tmp_path / "q.txt"
    qf.write_text("0.5\n5.5\n100\n")
    code, out, _ = run(capsys, "query", "--sketch", str(sk), "--cdf", str(qf))
    assert code == 0
    assert [float(x) for x in out.split()] == [0.0, 0.5, 1.0]
    qf.write_text("5\n1\n")
    code, _out, _err = run(capsys, "query", "--sketch", str(sk),
                           "--cdf", str(qf))
    assert code == 2
