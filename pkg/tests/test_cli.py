import json
import os

from homspace.cli import main

BASE = {
    "space": {"kind": "grid1d", "size": 33},
    "norm": {"s": 0.5, "p": 2.0, "q": 2.0, "variant": "besov",
             "field": {"kind": "constant", "value": 3.0}},
}


def write_config(tmp_path, extra=None, name="c.json"):
    cfg = json.loads(json.dumps(BASE))
    for key, val in (extra or {}).items():
        cfg.setdefault(key, {}).update(val)
    cfg.setdefault("output", {})["dir"] = str(tmp_path / "out")
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def run(args):
    return main(args)


def test_norm_constant_homogeneous_prints_zero(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert run(["--config", cfg, "norm", "compute"]) == 0
    out = capsys.readouterr().out.strip().splitlines()[0]
    assert abs(float(out)) <= 1e-10


def test_norm_variants(tmp_path, capsys):
    cfg = write_config(tmp_path)
    for variant in ("lebesgue", "Ldot", "Lb", "Lt_dot", "L_tilde", "triebel"):
        code = run(["--config", cfg, "--set", f"norm.variant={variant}",
                    "--set", 'norm.field.kind="holder"', "norm", "compute"])
        assert code == 0
        val = float(capsys.readouterr().out.strip().splitlines()[0])
        assert val >= 0


def test_unknown_config_key_exit_1(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert run(["--config", cfg, "--set", "nope.x=1", "norm", "compute"]) == 1
    assert run(["--config", cfg, "--set", "norm.bogus=1",
                "norm", "compute"]) == 1


def test_bad_space_document_exit_1(tmp_path, capsys):
    doc = {"n": 2, "dist": [[0.0, 1.0], [2.0, 0.0]], "weights": [1.0, 1.0]}
    p = tmp_path / "bad_space.json"
    p.write_text(json.dumps(doc))
    cfg = write_config(tmp_path, {"space": {"file": str(p)}})
    assert run(["--config", cfg, "space", "build"]) == 1
    assert "asymmetric" in capsys.readouterr().err


def test_cubes_build_and_verify_roundtrip(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert run(["--config", cfg, "cubes", "build"]) == 0
    capsys.readouterr()
    dump = os.path.join(str(tmp_path / "out"), "cubes.json")
    assert run(["--config", cfg, "cubes", "verify", "--dump", dump]) == 0
    capsys.readouterr()


def test_cubes_verify_tampered_exit_2(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert run(["--config", cfg, "cubes", "build"]) == 0
    capsys.readouterr()
    dump = os.path.join(str(tmp_path / "out"), "cubes.json")
    with open(dump) as fh:
        doc = json.load(fh)
    rec = doc["levels"]["2"]
    donor = next(i for i, m in enumerate(rec["members"]) if len(m) > 1)
    receiver = (donor + 1) % len(rec["members"])
    pt = [p for p in rec["members"][donor] if p != rec["centers"][donor]][0]
    rec["members"][donor] = [p for p in rec["members"][donor] if p != pt]
    rec["members"][receiver] = rec["members"][receiver] + [pt]
    with open(dump, "w") as fh:
        json.dump(doc, fh)
    assert run(["--config", cfg, "cubes", "verify", "--dump", dump]) == 2
    out = capsys.readouterr().out
    assert str(pt) in out


def test_space_report(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert run(["--config", cfg, "space", "report"]) == 0
    out = tmp_path / "out"
    assert (out / "geometry.txt").exists()
    assert (out / "geometry.csv").exists()
    capsys.readouterr()


def test_ati_validate(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert run(["--config", cfg, "ati", "validate"]) == 0
    text = (tmp_path / "out" / "ati_validate.txt").read_text()
    assert "cancellation residual" in text
    capsys.readouterr()


def test_frame_reconstruct_with_coefficients(tmp_path, capsys):
    cfg = write_config(tmp_path, {
        "norm": {"field": {"kind": "bandlimited", "seed": 1}},
        "frame": {"tol": 1e-6, "maxiter": 300, "dump_coefficients": True}})
    assert run(["--config", cfg, "frame", "reconstruct"]) == 0
    coeff = (tmp_path / "out" / "coefficients.csv").read_text()
    assert coeff.splitlines()[0] == "k,alpha,m,y_index,value,weight"
    capsys.readouterr()


def test_lab_equivalence_end_to_end(tmp_path, capsys):
    cfg = write_config(tmp_path, {"lab": {"pairing": "B_vs_L"}})
    assert run(["--config", cfg, "lab", "equivalence"]) == 0
    text = (tmp_path / "out" / "equivalence.txt").read_text()
    assert "ratio band" in text and "PASS" in text
    capsys.readouterr()


def test_effective_config_roundtrip_byte_identical(tmp_path, capsys):
    cfg = write_config(tmp_path, {"lab": {"pairing": "B_vs_L"}})
    assert run(["--config", cfg, "lab", "lemmas"]) == 0
    capsys.readouterr()
    out = tmp_path / "out"
    first = (out / "lemmas.txt").read_bytes()
    first_csv = (out / "lemmas.csv").read_bytes()
    eff = out / "effective_config.json"
    assert run(["--config", str(eff), "lab", "lemmas"]) == 0
    capsys.readouterr()
    assert (out / "lemmas.txt").read_bytes() == first
    assert (out / "lemmas.csv").read_bytes() == first_csv


def test_usage_error_exit_1(capsys):
    assert run(["norm", "jiggle"]) == 1


def test_threads_knob_validated(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert run(["--config", cfg, "--threads", "0", "norm", "compute"]) == 1
    assert run(["--config", cfg, "--threads", "4", "norm", "compute"]) == 0
    capsys.readouterr()


def test_norm_variant_flag(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert run(["--config", cfg, "--set", 'norm.field.kind="holder"',
                "norm", "compute", "--variant", "Lb_dot"]) == 0
    val = float(capsys.readouterr().out.strip().splitlines()[0])
    assert val > 0


def test_malformed_dump_exit_1(tmp_path, capsys):
    cfg = write_config(tmp_path)
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"delta": 0.5, "k_min": 0, "k_max": 2,
                               "levels": {}}))
    assert run(["--config", cfg, "cubes", "verify", "--dump", str(bad)]) == 1
    assert "malformed" in capsys.readouterr().err


def test_field_file_kind(tmp_path, capsys):
    vals = tmp_path / "field.json"
    vals.write_text(json.dumps([float(i) for i in range(33)]))
    cfg = write_config(tmp_path, {"norm": {
        "field": {"kind": "file", "file": str(vals)}, "variant": "lebesgue"}})
    assert run(["--config", cfg, "norm", "compute"]) == 0
    assert float(capsys.readouterr().out.strip().splitlines()[0]) > 0
    cfg2 = write_config(tmp_path, {"norm": {"field": {"kind": "file"}}},
                        name="c2.json")
    assert run(["--config", cfg2, "norm", "compute"]) == 1


def test_lab_band_cap_violation_exit_2(tmp_path, capsys):
    cfg = write_config(tmp_path, {"lab": {"pairing": "B_vs_L",
                                          "caps": {"ratio_max_over_min": 1.0001}}})
    assert run(["--config", cfg, "lab", "equivalence"]) == 2
    assert "FAIL" in capsys.readouterr().out
