"""Reports: canonical JSON records, CSV tables and run provenance."""
import csv
import hashlib
import json
import logging
import math
import platform

import git
import numpy as np

__author__ = "Johannes Kazantzidis"
__email__ = "johannes.kazantzidis@ess.eu"
__status__ = "Production"

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def _plain(value):
    """Converts numpy scalars and arrays, tuples and non-finite floats to JSON values."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return value


def canonical_json(data):
    return json.dumps(_plain(data), sort_keys=True, indent=2, separators=(",", ": "))


def config_digest(config):
    """SHA-256 of the canonical JSON form of a configuration."""
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


def git_commit(path="."):
    """Returns ``(url, commit)`` of the repository holding ``path``, or None outside git."""
    try:
        repo = git.Repo(path, search_parent_directories=True)
        url = next((r.url for r in repo.remotes), "")
        return url, repo.head.commit.hexsha
    except (git.exc.InvalidGitRepositoryError, git.exc.NoSuchPathError, ValueError):
        return None


def provenance():
    info = {"python": platform.python_version(), "numpy": np.__version__}
    commit = git_commit()
    if commit is not None:
        info["git url"], info["git commit"] = commit
    return info


class Report:
    """Schema-versioned record of one subcommand run.

    Args:
        command (str): Subcommand name.
        config (dict): Effective configuration; its digest identifies the run.
    """

    def __init__(self, command, config):
        self.command = command
        self.config = dict(config)
        self.outputs = {}
        self.gates = {}
        self.extra = {}

    def add(self, **outputs):
        self.outputs.update(outputs)

    def gate(self, name, passed):
        self.gates[name] = bool(passed)
        if not passed:
            log.warning("gate %s failed", name)

    @property
    def passed(self):
        return all(self.gates.values())

    def as_dict(self):
        record = {
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "config": self.config,
            "config_digest": config_digest(self.config),
            "outputs": self.outputs,
            "gates": self.gates,
            "passed": self.passed,
        }
        record.update(self.extra)
        return record

    def to_json(self):
        return canonical_json(self.as_dict()) + "\n"

    def write(self, path):
        with open(path, "w") as f:
            f.write(self.to_json())
        log.info("report written to %s", path)


def write_table(path, rows):
    """Writes a list of dicts as CSV with the union of keys as sorted header."""
    header = sorted({key for row in rows for key in row})
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=header)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _plain(v) for k, v in row.items()})
