"""Shared fixtures: small synthetic bundles and desk-scale train configs.

Also prints one PASS/FAIL line per acceptance criterion when the
acceptance module runs.
"""

import warnings

import pytest


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call" and item.fspath.basename == "test_acceptance.py":
        reporter = item.config.pluginmanager.get_plugin("terminalreporter")
        if reporter is not None:
            status = "PASS" if rep.passed else "FAIL"
            reporter.write_line(f"[{status}] {item.name}")

from oncodrp.dataio import SyntheticConfig, generate_synthetic
from oncodrp.encoder import EncoderConfig
from oncodrp.tokenizer import build_vocabularies
from oncodrp.trainer import TrainConfig


def desk_config(**kw):
    """TrainConfig for tiny runs; silences the usual-range warnings."""
    kw.setdefault("encoder", EncoderConfig(dim=16, heads=2, layers=1,
                                           drug_hidden_dim=32, dropout=0.0))
    kw.setdefault("dropout", kw["encoder"].dropout)
    kw.setdefault("batch_size", 16)
    kw.setdefault("epochs", 2)
    kw.setdefault("n_intervals", 4)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return TrainConfig(**kw)


@pytest.fixture(scope="session")
def tiny_bundle():
    cfg = SyntheticConfig(n_survival=60, n_recist=60, n_cellline=60,
                          panel_size=12, n_drugs=8, pairs_per_gene=3,
                          signal_strength=2.5, seed=11)
    return generate_synthetic(cfg)


@pytest.fixture(scope="session")
def tiny_vocabs(tiny_bundle):
    return build_vocabularies(tiny_bundle.panel_genes, tiny_bundle.known_pairs)
