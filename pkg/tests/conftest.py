import json

import numpy as np
import pytest


@pytest.fixture
def tmp_json(tmp_path):
    def write(obj, name="f.json"):
        p = tmp_path / name
        p.write_text(json.dumps(obj))
        return p
    return write


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    rows = []
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            if rep.when != "call" and key != "error":
                continue
            props = dict(getattr(rep, "user_properties", []))
            if "criterion" in props:
                rows.append((props["criterion"], "PASS" if rep.passed else "FAIL",
                             props.get("detail", "")))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for num, status, detail in sorted(rows):
        terminalreporter.write_line(f"criterion {num}: {status}  {detail}")
