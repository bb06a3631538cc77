import numpy as np
import pytest

import facevox

TINY = dict(view_size=16, encoder_channels=[8, 8, 8, 8], decoder_channels=[8, 8, 8, 8])


def test_synth_sample_shapes_and_determinism():
    depth, grid = facevox.synth_sample(3, **TINY)
    assert depth.shape == (16, 16)
    assert grid.shape == (16, 16, 16)
    assert set(np.unique(grid)) <= {0.0, 1.0}
    assert ((depth == 0) | ((depth > 0) & (depth <= 1))).all()
    again, _ = facevox.synth_sample(3, **TINY)
    assert np.array_equal(depth, again)


def test_metrics_match_numpy():
    rng = np.random.default_rng(0)
    pred = rng.random((8, 8, 8))
    truth = (rng.random((8, 8, 8)) < 0.3).astype(float)
    p, t = pred > 0.5, truth > 0.5
    assert facevox.iou(pred, truth) == pytest.approx((p & t).sum() / (p | t).sum(), abs=1e-12)
    y = np.clip(pred, 1e-7, 1 - 1e-7)
    ce = -(truth * np.log(y) + (1 - truth) * np.log(1 - y)).mean()
    assert facevox.ce(pred, truth) == pytest.approx(ce, abs=1e-12)


def test_point_hausdorff_matches_brute_force():
    rng = np.random.default_rng(1)
    a, b = rng.random((7, 3)), rng.random((11, 3))
    d = np.linalg.norm(a[:, None] - b[None], axis=2)
    assert facevox.hausdorff(a, b) == max(d.min(1).max(), d.min(0).max())


def test_training_and_checkpoint_round_trip(tmp_path):
    depth, grid = facevox.synth_sample(5, **TINY)
    trainer = facevox.Trainer(seed=4, **TINY)
    for _ in range(2):
        losses = trainer.train_iteration(depth, grid)
        assert len(losses["generator"]) == 2
        assert np.isfinite(losses["critic"])
    assert (trainer.critic_steps, trainer.generator_steps) == (2, 4)

    path = tmp_path / "run.agck"
    trainer.save(path)
    resumed = facevox.Trainer.load(path)
    assert trainer.train_iteration(depth, grid) == resumed.train_iteration(depth, grid)

    gen = facevox.Generator(path)
    assert gen.view_size == 16
    out = gen.predict(depth)
    assert out.shape == (16, 16, 16)
    assert ((out > 0) & (out < 1)).all()


def test_config_errors_raise():
    with pytest.raises(facevox.ConfigError):
        facevox.Trainer(colour="red")


def test_cli_entry_point(tmp_path):
    sets = ["view_size=16", "encoder_channels=8,8,8,8", "decoder_channels=8,8,8,8", "samples=2"]
    args = ["synth", "--out", str(tmp_path / "d")]
    for s in sets:
        args += ["--set", s]
    code, _, _ = facevox.run_cli(args)
    assert code == 0
    assert (tmp_path / "d" / "manifest.tsv").exists()
    assert facevox.run_cli(["bogus"])[0] == 1
