import json
from dataclasses import replace

import numpy as np
import pytest

from ssvae.synth import (DatasetError, SynthConfig, generate_block, generate_dataset, read_dataset,
                         system_matrices, train_test_split, write_dataset)

SMALL = SynthConfig(channels=8, frames_per_block=200, n_blocks=3, event_duration=20)


def test_defaults():
    cfg = SynthConfig()
    assert (cfg.channels, cfg.background_dim, cfg.input_dim) == (32, 4, 3)
    assert (cfg.frames_per_block, cfg.n_blocks, cfg.ar_coefficient) == (570, 19, 0.98)


@pytest.mark.parametrize("change", [dict(ar_coefficient=1.0), dict(ar_coefficient=0.0),
                                    dict(channels=6), dict(noise_std=-0.1), dict(frames_per_block=0)])
def test_invalid_config_rejected(change):
    with pytest.raises(ValueError):
        generate_block(replace(SynthConfig(), **change), 0)


def test_degenerate_config_is_pure_background():
    cfg = replace(SMALL, noise_std=0.0, event_rate=0.0)
    b = generate_block(cfg, 0)
    assert not b.labels.any()
    np.testing.assert_array_equal(b.input_latent, 0.0)
    np.testing.assert_allclose(b.observations, b.background_latent @ b.emission_r.T, atol=1e-5)


def test_block_is_deterministic():
    assert generate_block(SMALL, 1) == generate_block(SMALL, 1)
    assert not np.array_equal(generate_block(SMALL, 1).observations, generate_block(SMALL, 2).observations)


def test_background_autocorrelation():
    cfg = replace(SynthConfig(), noise_std=0.0, event_rate=0.0)
    acs = []
    for i in range(10):
        r = generate_block(cfg, i).background_latent.astype(float)
        r = r - r.mean(axis=0)
        acs.append(np.sum(r[1:] * r[:-1], axis=0) / np.sum(r * r, axis=0))
    assert np.all(np.abs(np.mean(acs, axis=0) - 0.98) <= 0.02)


def test_background_stationary_variance():
    cfg = replace(SynthConfig(), noise_std=0.0, event_rate=0.0, frames_per_block=2000)
    r = np.concatenate([generate_block(cfg, i).background_latent for i in range(50)]).astype(float)
    expected = cfg.process_noise_std ** 2 / (1 - cfg.ar_coefficient ** 2)
    # F1 is a scaled rotation, so each mode's long-run variance follows the AR(1) formula
    np.testing.assert_allclose(r.var(axis=0), expected, rtol=0.15)


def test_construction_invariants():
    for i in range(5):
        b = generate_block(SynthConfig(), i)
        resid = b.observations - b.background_latent @ b.emission_r.T - b.input_latent @ b.emission_u.T
        assert abs(resid.std() / b.noise_std - 1) < 0.2
        np.testing.assert_array_equal(b.input_latent[b.labels == 0], 0.0)
        assert b.labels.any() and not b.labels.all()


def test_event_energy_only_inside_events():
    b = generate_block(SynthConfig(), 0)
    power = np.sum((b.input_latent.astype(float) @ b.emission_u.T.astype(float)) ** 2, axis=1)
    assert power[b.labels == 1].mean() > 0
    assert np.all(power[b.labels == 0] == 0)


def test_emission_columns_orthonormal():
    h1, h2, _, _ = system_matrices(SynthConfig())
    h = np.hstack([h1, h2])
    np.testing.assert_allclose(h.T @ h, np.eye(7), atol=1e-10)


def test_labels_have_both_values_even_for_extreme_rates():
    for rate in (0.01, 50.0):
        for i in range(5):
            labels = generate_block(replace(SMALL, event_rate=rate), i).labels
            assert labels.any() and not labels.all()


def test_split():
    assert train_test_split(19) == (list(range(11)), list(range(11, 19)))
    train, test = train_test_split(2, 0.99)
    assert train == [0] and test == [1]


def test_round_trip(tmp_path):
    blocks = generate_dataset(SMALL)
    write_dataset(blocks, tmp_path, SMALL)
    loaded, cfg = read_dataset(tmp_path)
    assert cfg == SMALL
    assert loaded == blocks
    for a, b in zip(loaded, blocks):
        for name in ("observations", "background_latent", "input_latent", "emission_r"):
            assert getattr(a, name).tobytes() == getattr(b, name).tobytes()


def test_write_is_byte_identical(tmp_path):
    for d in ("a", "b"):
        write_dataset(generate_dataset(SMALL), tmp_path / d, SMALL)
    for name in ("meta.json", "blocks.bin"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_layout_matches_documented_order(tmp_path):
    blocks = generate_dataset(SMALL)
    write_dataset(blocks, tmp_path, SMALL)
    raw = np.frombuffer((tmp_path / "blocks.bin").read_bytes(), dtype="<f4")
    n, c = SMALL.frames_per_block, SMALL.channels
    np.testing.assert_array_equal(raw[: n * c].reshape(n, c), blocks[0].observations)
    meta = json.loads((tmp_path / "meta.json").read_text())
    assert meta["format_version"] == 1 and meta["blocks"][1]["offset"] == meta["blocks"][0]["nbytes"]


def test_truncated_data_reports_byte_counts(tmp_path):
    write_dataset(generate_dataset(SMALL), tmp_path, SMALL)
    raw = (tmp_path / "blocks.bin").read_bytes()
    (tmp_path / "blocks.bin").write_bytes(raw[:-10])
    with pytest.raises(DatasetError, match=f"expected {len(raw)} bytes, found {len(raw) - 10}"):
        read_dataset(tmp_path)


def test_header_channel_count_mismatch(tmp_path):
    write_dataset(generate_dataset(SMALL), tmp_path, SMALL)
    meta = json.loads((tmp_path / "meta.json").read_text())
    meta["config"]["channels"] = 9
    (tmp_path / "meta.json").write_text(json.dumps(meta))
    with pytest.raises(DatasetError, match="bytes"):
        read_dataset(tmp_path)


@pytest.mark.parametrize("corrupt, match", [
    (lambda m: m.update(format_version=2), "format_version"),
    (lambda m: m.pop("blocks"), "malformed"),
    (lambda m: m["config"].update(mystery=1), "unknown"),
])
def test_bad_headers(tmp_path, corrupt, match):
    write_dataset(generate_dataset(SMALL), tmp_path, SMALL)
    meta = json.loads((tmp_path / "meta.json").read_text())
    corrupt(meta)
    (tmp_path / "meta.json").write_text(json.dumps(meta))
    with pytest.raises(DatasetError, match=match):
        read_dataset(tmp_path)


def test_malformed_json(tmp_path):
    write_dataset(generate_dataset(SMALL), tmp_path, SMALL)
    (tmp_path / "meta.json").write_text("{not json")
    with pytest.raises(DatasetError, match="meta.json"):
        read_dataset(tmp_path)
