import numpy as np
import pytest

from feedbacktn.cli import main, parse_config, run
from feedbacktn.errors import ConfigError


BASE_CONFIG = """
[model]
topology = single-feedback
tau = 1.0

[node.1]
omega = 0.5
delta = 0.0
gamma_l = 0.5
gamma_r = 0.5
phi = 3.141592653589793

[numerics]
dt = 0.05
chi_max = 20
svd_cutoff = 1e-10

[task]
kind = evolve
t_final = 2.0
readout_stride = 4

[output]
dir = {out}
"""


def write_config(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text.format(out=tmp_path / "out"))
    return path


def test_parse_config_roundtrip(tmp_path):
    cfg = parse_config(write_config(tmp_path, BASE_CONFIG))
    assert cfg.task == "evolve"
    assert cfg.sim.k == 20
    assert cfg.net.n == 1


def test_invalid_tau_dt_exit_code(tmp_path, capsys):
    bad = BASE_CONFIG.replace("dt = 0.05", "dt = 0.3")
    path = write_config(tmp_path, bad)
    assert run(str(path)) == 2
    err = capsys.readouterr().err
    assert "tau/dt" in err


def test_missing_node_section(tmp_path):
    text = BASE_CONFIG.replace("[node.1]", "[node.9]")
    with pytest.raises(ConfigError):
        parse_config(write_config(tmp_path, text))


def test_unknown_task_rejected(tmp_path):
    text = BASE_CONFIG.replace("kind = evolve", "kind = dance")
    with pytest.raises(ConfigError):
        parse_config(write_config(tmp_path, text))


def test_evolve_task_runs_and_is_deterministic(tmp_path, capsys):
    path = write_config(tmp_path, BASE_CONFIG)
    assert main(["run", "--config", str(path)]) == 0
    out = tmp_path / "out" / "evolve.csv"
    body1 = out.read_bytes()
    assert main(["run", "--config", str(path)]) == 0
    body2 = out.read_bytes()
    assert body1 == body2
    text = body1.decode()
    assert "# feedbacktn" in text
    assert "discarded_weight" in text
    assert "t,rho_ee,re_rho_ge,im_rho_ge" in text
    rows = [line for line in text.splitlines() if not line.startswith("#")]
    data = np.array([[float(x) for x in row.split(",")]
                     for row in rows[1:]])
    assert data[0, 1] == pytest.approx(0.0)  # ground start
    assert np.all(data[:, 1] >= -1e-9)
    assert np.all(data[:, 1] <= 1 + 1e-9)


def test_evolve_checkpoint_resume(tmp_path):
    path = write_config(tmp_path, BASE_CONFIG)
    ckpt = tmp_path / "ckpt"
    assert main(["run", "--config", str(path),
                 "--checkpoint-dir", str(ckpt)]) == 0
    files = list(ckpt.glob("*.mpso"))
    assert files
    body1 = (tmp_path / "out" / "evolve.csv").read_bytes()
    assert main(["run", "--config", str(path), "--checkpoint-dir", str(ckpt),
                 "--resume"]) == 0
    assert (tmp_path / "out" / "evolve.csv").read_bytes() == body1


def test_steady_task_decoupled(tmp_path):
    text = BASE_CONFIG.replace("kind = evolve", "kind = steady")
    text = text.replace("gamma_r = 0.5", "gamma_r = 0.0")
    text = text.replace("phi = 3.141592653589793", "phi = 0.0")
    text = text.replace("dt = 0.05", "dt = 0.002")
    path = write_config(tmp_path, text)
    assert main(["run", "--config", str(path)]) == 0
    out = (tmp_path / "out" / "steady.csv").read_text()
    rows = [line for line in out.splitlines() if not line.startswith("#")]
    header = rows[0].split(",")
    values = dict(zip(header, [float(x) for x in rows[1].split(",")]))
    assert values["rho_ee"] == pytest.approx(1.0 / 3.0, abs=1e-4)
    assert values["lambda1_abs"] == pytest.approx(1.0)
    assert "# lambda_drift" in out


def test_meanfield_task(tmp_path):
    text = BASE_CONFIG.replace("kind = evolve", "kind = meanfield")
    path = write_config(tmp_path, text)
    assert main(["run", "--config", str(path)]) == 0
    out = (tmp_path / "out" / "meanfield.csv").read_text()
    assert "mf_steady_rho_ee" in out


def test_multinode_task(tmp_path):
    text = BASE_CONFIG.replace("kind = evolve", "kind = multinode")
    text = text.replace("topology = single-feedback",
                        "topology = bidirectional-pair")
    text = text.replace(
        "[numerics]",
        "[node.2]\nomega = 0.0\ngamma_l = 0.1\ngamma_r = 0.1\n"
        "phi = 3.141592653589793\n\n[numerics]",
    )
    path = write_config(tmp_path, text)
    assert main(["run", "--config", str(path)]) == 0
    out = (tmp_path / "out" / "multinode.csv").read_text()
    assert "rho_ee_1" in out and "rho_ee_2" in out


def test_entropy_scan_task_with_workers(tmp_path):
    text = BASE_CONFIG.replace("kind = evolve", "kind = entropy-scan")
    text = text.replace(
        "t_final = 2.0",
        "omegas = 0.0,0.5\ngamma_taus = 1.0\nphis = 3.141592653589793\n"
        "m_sites = 4",
    )
    path = write_config(tmp_path, text)
    assert main(["run", "--config", str(path)]) == 0
    body1 = (tmp_path / "out" / "entropy_scan.csv").read_bytes()
    assert main(["run", "--config", str(path), "--workers", "2"]) == 0
    body2 = (tmp_path / "out" / "entropy_scan.csv").read_bytes()
    assert body1 == body2  # deterministic regardless of worker count
    rows = [r for r in body1.decode().splitlines() if not r.startswith("#")]
    assert rows[0] == "omega,gamma_tau,phi,s_max,s_ss"
    for row in rows[1:]:
        vals = [float(x) for x in row.split(",")]
        assert np.isfinite(vals[3]) and np.isfinite(vals[4])
        assert 0.0 <= vals[3] <= 10.0
