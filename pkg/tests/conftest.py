"""Shared helpers: cached acceptance datasets and the per-criterion report."""
from pathlib import Path

import pytest

from scramble_lab.config import load_config
from scramble_lab.runner import run_experiment

ROOT = Path(__file__).resolve().parents[1]
_RESULTS: dict[str, tuple[bool, str]] = {}
_CACHE: dict[str, object] = {}


def acceptance_run(name: str):
    """Run (or reload from saved records) one configs/acceptance experiment.

    Outputs go to runs/acceptance/<name>; trajectory records are reused when
    the configuration fingerprint matches, so only the first call simulates.
    """
    if name not in _CACHE:
        cfg = load_config(
            ROOT / "configs" / "acceptance" / f"{name}.yaml",
            output_dir=str(ROOT / "runs" / "acceptance" / name),
        )
        for attr in ("haar_cache_dir", "saturation_file"):
            value = getattr(cfg, attr)
            if value is not None and not Path(value).is_absolute():
                setattr(cfg, attr, str(ROOT / value))
        _CACHE[name] = run_experiment(cfg, reuse=True)
    return _CACHE[name]


@pytest.fixture
def report():
    """Record the verdict of an acceptance criterion for the final summary."""

    def _report(criterion: str, passed: bool, detail: str = "") -> bool:
        _RESULTS[criterion] = (bool(passed), detail)
        return passed

    return _report


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_RESULTS, key=lambda k: (int(k.rstrip("ab")), k)):
        ok, detail = _RESULTS[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
