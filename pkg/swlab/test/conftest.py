import os
import platform

import git
import numpy as np
import pytest

from swlab.curvature import curvature_stack, flat_metric
from swlab.grid4 import GridSpec

__author__ = "Johannes Kazantzidis"
__email__ = "johannes.kazantzidis@ess.eu"
__status__ = "Production"


def pytest_configure(config):
    """Configuration for reports.

    Adds the interpreter, numpy version and the git commit of the checkout
    to the metadata shown at the top of pytest-html reports.
    """
    metadata = getattr(config, "_metadata", None)
    if metadata is None:
        return
    metadata[" python"] = platform.python_version()
    metadata[" numpy"] = np.__version__
    set_commit(metadata, " swlab", os.path.dirname(__file__))


def set_commit(metadata, tag, path):
    try:
        repo = git.Repo(path, search_parent_directories=True)
        metadata["{} git commit".format(tag)] = repo.head.commit.hexsha
        urls = [remote.url for remote in repo.remotes]
        if urls:
            metadata["{} url".format(tag)] = urls[0]
    except (git.exc.InvalidGitRepositoryError, git.exc.NoSuchPathError, ValueError):
        metadata["{} git commit".format(tag)] = "Ignored"


@pytest.fixture(scope="module")
def grid4():
    """Smallest isotropic grid; enough for constant and algebraic checks."""
    return GridSpec((4, 4, 4, 4))


@pytest.fixture(scope="module")
def line_grid():
    """Grid refined along x0 only, for fields depending on x0 alone."""
    return GridSpec((32, 4, 4, 4))


@pytest.fixture(scope="module")
def flat4(grid4):
    return flat_metric(grid4)


@pytest.fixture(scope="module")
def flat_line(line_grid):
    m = flat_metric(line_grid)
    return m, curvature_stack(m)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
