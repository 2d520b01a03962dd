import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))


@pytest.fixture(scope="session")
def planted_run(tmp_path_factory):
    """One complete run over the planted corpus, shared by read-only tests.

    Returns (config_path, run_dir, metrics). Tests that mutate a run make
    their own.
    """
    import helpers

    base = tmp_path_factory.mktemp("planted-shared")
    config_path = helpers.write_planted_config(base)
    metrics = helpers.run_planted_pipeline(config_path)
    return config_path, base / "run", metrics
