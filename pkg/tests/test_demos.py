import subprocess
import sys
from pathlib import Path

import pytest

DEMOS = Path(__file__).resolve().parent.parent / "demos"


@pytest.mark.parametrize("script", ["mesh_and_operators.py", "symmetry_and_stationarity.py"])
def test_quick_demos_run(script):
    proc = subprocess.run([sys.executable, str(DEMOS / script)], capture_output=True, text=True, timeout=300)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.strip()


def test_trend_demo_resumes_from_its_log(tmp_path):
    # a completed log means no new runs are started
    import json

    out = tmp_path / "t.jsonl"
    rows = []
    for name, values in {"Lambda": (0.0, 0.5), "b": (0.2, 2.5), "sigma": (0.0, 10.0), "kappa": (0.1, 10.0)}.items():
        for v in values:
            params = {"Lambda": 5.0, "b": 1.0, "sigma": 1.0, "kappa": 1.0, name: v}
            rows.append({"params": params, "rafts": 1, "energy": 1.0, "t": 1.0, "steps": 1, "vertices": 1, "status": "ok", "wall": 0})
    rows.append({"params": {"Lambda": 5.0, "b": 1.0, "sigma": 1.0, "kappa": 1.0}, "rafts": 1, "energy": 1.0, "t": 1.0,
                 "steps": 1, "vertices": 1, "status": "ok", "wall": 0})
    out.write_text("".join(json.dumps(r) + "\n" for r in rows))
    proc = subprocess.run([sys.executable, str(DEMOS / "parameter_trends.py"), "--out", str(out)], capture_output=True, text=True, timeout=60)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.count("rafts [1, 1, 1]") == 4
