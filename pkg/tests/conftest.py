import time

import pytest

from aquafuse import cli


@pytest.fixture(scope="session")
def pipeline_dir(tmp_path_factory):
    """One full run-all execution shared by the CLI and acceptance tests."""
    out = tmp_path_factory.mktemp("pipeline")
    assert cli.main(["run-all", "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="session")
def pipeline_repeat(tmp_path_factory):
    """A second timed run-all with identical configuration, for the
    determinism and runtime checks.  Returns (directory, seconds)."""
    out = tmp_path_factory.mktemp("pipeline_repeat")
    start = time.perf_counter()
    assert cli.main(["run-all", "--out", str(out)]) == 0
    return out, time.perf_counter() - start
