from __future__ import annotations

import hashlib
import math

import numpy as np
import pytest
import torch

from aigiqa.data import make_split, normalize_labels
from aigiqa.errors import (
    CheckpointMismatch,
    EmptySplit,
    EpochOutOfRange,
    NonFiniteLoss,
)
from aigiqa.metrics import krcc, plcc, srcc
from aigiqa.training import (
    TrainConfig,
    build_encoder_from_config,
    build_scorer,
    epoch_order,
    evaluate,
    load_checkpoint,
    lr_at,
    save_checkpoint,
    train,
)

TINY = dict(
    stub_encoder=True,
    stub_embed_dim=32,
    stub_image_size=16,
    hidden_dim=16,
    context_length=4,
    batch_size=4,
    eval_interval=0,
)


def _tensor_hash(t: torch.Tensor) -> str:
    return hashlib.sha256(t.detach().cpu().contiguous().numpy().tobytes()).hexdigest()


class TestTrainConfig:
    def test_defaults_follow_recipe(self):
        cfg = TrainConfig()
        assert cfg.lr == 0.002
        assert cfg.epochs == 100
        assert cfg.batch_size == 32
        assert cfg.context_length == 16
        assert cfg.warmup_epochs == 1
        assert cfg.warmup_lr == 1e-5
        assert cfg.momentum == 0.0
        assert cfg.backbone == "ViT-B/16"

    def test_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(lr=0.0)
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)
        with pytest.raises(ValueError):
            TrainConfig(epochs=5, warmup_epochs=5)
        with pytest.raises(ValueError):
            TrainConfig(split_ratio=1.5)
        with pytest.raises(ValueError):
            TrainConfig(scorer="banana")

    def test_zero_epochs_allowed(self):
        TrainConfig(epochs=0, warmup_epochs=0)

    def test_round_trip(self):
        cfg = TrainConfig(epochs=3, category_words=("bad", "good"))
        assert TrainConfig.from_dict(cfg.to_dict()) == cfg

    def test_hash_stable_and_sensitive(self):
        cfg = TrainConfig()
        assert cfg.hash() == TrainConfig().hash()
        for delta in (
            dict(lr=0.003), dict(epochs=50), dict(batch_size=16), dict(seed=1),
            dict(backbone="ViT-B/32"), dict(context_length=8), dict(scorer="similarity"),
            dict(category_words=("bad", "good")), dict(momentum=0.9),
        ):
            assert TrainConfig(**delta).hash() != cfg.hash()


class TestLrSchedule:
    def test_warmup_value(self):
        assert lr_at(0, TrainConfig()) == 1e-5

    def test_peak_right_after_warmup(self):
        assert lr_at(1, TrainConfig()) == 0.002

    def test_midpoint_half_peak(self):
        cfg = TrainConfig()
        mid = 1 + (100 - 1) / 2
        assert lr_at(mid, cfg) == pytest.approx(0.001, abs=1e-12)

    def test_final_epoch_near_zero(self):
        cfg = TrainConfig()
        assert lr_at(99, cfg) < 2e-6
        assert lr_at(99, cfg) > 0.0

    def test_monotone_after_peak(self):
        cfg = TrainConfig()
        values = [lr_at(e, cfg) for e in range(1, 100)]
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_continuous_on_post_warmup_segment(self):
        cfg = TrainConfig()
        for e in (1.0, 25.0, 80.0):
            assert lr_at(e + 1e-9, cfg) == pytest.approx(lr_at(e, cfg), abs=1e-9)

    def test_out_of_range(self):
        cfg = TrainConfig()
        with pytest.raises(EpochOutOfRange):
            lr_at(-1, cfg)
        with pytest.raises(EpochOutOfRange):
            lr_at(100, cfg)


class TestEpochOrder:
    def test_deterministic_permutation(self):
        a = epoch_order(3, 5, 20)
        b = epoch_order(3, 5, 20)
        assert a == b
        assert sorted(a) == list(range(20))

    def test_varies_with_epoch_and_seed(self):
        assert epoch_order(3, 5, 20) != epoch_order(3, 6, 20)
        assert epoch_order(3, 5, 20) != epoch_order(4, 5, 20)


class TestTrain:
    def test_zero_epochs_returns_initialization(self, dataset_factory):
        manifest, _ = dataset_factory(count=8, split_ratio=0.75)
        cfg = TrainConfig(epochs=0, warmup_epochs=0, seed=11, **TINY)
        result = train(manifest, cfg)
        torch.manual_seed(cfg.seed)
        reference = build_scorer(cfg, build_encoder_from_config(cfg))
        assert torch.equal(result.model.context.vectors, reference.context.vectors)
        for got, want in zip(result.model.head.parameters(), reference.head.parameters()):
            assert torch.equal(got, want)

    def test_loss_history_recorded(self, dataset_factory):
        manifest, _ = dataset_factory(count=8, split_ratio=0.75)
        cfg = TrainConfig(epochs=3, warmup_epochs=1, seed=0, **TINY)
        result = train(manifest, cfg)
        assert [h["epoch"] for h in result.history] == [0, 1, 2]
        assert all(math.isfinite(h["train_loss"]) for h in result.history)
        assert result.history[0]["lr"] == 1e-5

    def test_requires_train_split(self, dataset_factory):
        manifest, _ = dataset_factory(count=6)
        cfg = TrainConfig(epochs=1, warmup_epochs=0, **TINY)
        with pytest.raises(EmptySplit):
            train(manifest, cfg)

    def test_frozen_encoder_trainable_rest(self, dataset_factory):
        manifest, _ = dataset_factory(count=8, split_ratio=0.75)
        cfg = TrainConfig(epochs=5, warmup_epochs=0, lr=0.05, seed=2, **TINY)
        encoder = build_encoder_from_config(cfg)
        enc_hash_before = encoder.weight_hash()
        torch.manual_seed(cfg.seed)
        reference = build_scorer(cfg, build_encoder_from_config(cfg))
        ctx_before = _tensor_hash(reference.context.vectors)
        result = train(manifest, cfg, encoder=encoder)
        assert encoder.weight_hash() == enc_hash_before
        assert _tensor_hash(result.model.context.vectors) != ctx_before

    def test_periodic_evaluation_and_best_checkpoint(self, dataset_factory, tmp_path):
        manifest, _ = dataset_factory(count=10, split_ratio=0.8)
        cfg = TrainConfig(
            epochs=4, warmup_epochs=1, seed=0,
            **{**TINY, "eval_interval": 2},
        )
        result = train(manifest, cfg, out_dir=tmp_path / "run")
        # evals at epochs 2 (interval) and 4 (final)
        assert len(result.reports) == 2
        assert (tmp_path / "run" / "last.pt").is_file()
        assert (tmp_path / "run" / "best.pt").is_file()
        assert (tmp_path / "run" / "trainlog.jsonl").is_file()

    def test_non_finite_loss_diagnostics(self, dataset_factory):
        manifest, _ = dataset_factory(count=8, split_ratio=0.75)
        cfg = TrainConfig(epochs=4, warmup_epochs=0, lr=1e30, seed=0, **TINY)
        with pytest.raises(NonFiniteLoss) as err:
            train(manifest, cfg)
        assert "lr" in str(err.value)
        assert "img_" in str(err.value)  # batch ids included

    def test_resume_matches_uninterrupted_run(self, dataset_factory, tmp_path):
        manifest, _ = dataset_factory(count=8, split_ratio=0.75)
        kwargs = dict(warmup_epochs=1, lr=0.02, seed=5, momentum=0.9, **TINY)

        full = train(manifest, TrainConfig(epochs=6, **kwargs), out_dir=tmp_path / "full")

        half_dir = tmp_path / "half"
        cfg6 = TrainConfig(epochs=6, **kwargs)
        cfg3 = TrainConfig(epochs=3, **kwargs)
        torch.manual_seed(cfg3.seed)
        encoder = build_encoder_from_config(cfg3)
        model = build_scorer(cfg3, encoder)
        opt = torch.optim.SGD(model.trainable_parameters(), lr=cfg3.warmup_lr, momentum=0.9)
        from aigiqa.data import ImageCache
        from aigiqa.training import _step_loss

        norm = normalize_labels(manifest)
        records = norm.train_records
        targets = torch.tensor([r.mos for r in records])
        cache = ImageCache(encoder.image_size)
        for epoch in range(3):
            lr = lr_at(epoch, cfg6)
            for group in opt.param_groups:
                group["lr"] = lr
            order = epoch_order(cfg6.seed, epoch, len(records))
            for lo in range(0, len(order), cfg6.batch_size):
                batch = order[lo:lo + cfg6.batch_size]
                loss = _step_loss(model, cache.batch([records[i] for i in batch]), targets[batch])
                opt.zero_grad()
                loss.backward()
                opt.step()
        ckpt = save_checkpoint(
            half_dir / "mid.pt", model, cfg6, manifest, epoch=3, step=6, optimizer=opt
        )

        resumed = train(manifest, cfg6, resume=ckpt)
        assert torch.equal(resumed.model.context.vectors, full.model.context.vectors)
        for got, want in zip(resumed.model.head.parameters(), full.model.head.parameters()):
            assert torch.equal(got, want)

    def test_similarity_scorer_trains(self, dataset_factory):
        manifest, _ = dataset_factory(count=8, split_ratio=0.75)
        cfg = TrainConfig(
            epochs=2, warmup_epochs=0, seed=0, scorer="similarity",
            **{k: v for k, v in TINY.items() if k != "hidden_dim"},
        )
        result = train(manifest, cfg)
        assert len(result.history) == 2
        assert all(math.isfinite(h["train_loss"]) for h in result.history)

    def test_authenticity_dimension_trains_independently(self, dataset_factory):
        manifest, _ = dataset_factory(
            count=8, split_ratio=0.75, profile="aigciqa2023"
        )
        quality = train(manifest, TrainConfig(epochs=1, warmup_epochs=0, seed=0, **TINY))
        auth = train(
            manifest,
            TrainConfig(epochs=1, warmup_epochs=0, seed=0, target_dim="authenticity", **TINY),
        )
        # different labels, different trajectories
        assert not torch.equal(quality.model.context.vectors, auth.model.context.vectors)


class TestCheckpoints:
    def test_round_trip_preserves_predictions(self, dataset_factory, tmp_path):
        manifest, _ = dataset_factory(count=8, split_ratio=0.75)
        cfg = TrainConfig(epochs=2, warmup_epochs=0, seed=0, **TINY)
        result = train(manifest, cfg, out_dir=tmp_path)
        model, cfg2, payload = load_checkpoint(result.checkpoint_path)
        assert cfg2 == cfg
        assert payload["label_range"] == (0.0, 5.0)
        assert payload["head"] is not None
        images = torch.randn(3, 3, 16, 16)
        with torch.no_grad():
            assert torch.equal(result.model(images), model(images))

    def test_encoder_hash_validated(self, dataset_factory, tmp_path):
        manifest, _ = dataset_factory(count=8, split_ratio=0.75)
        cfg = TrainConfig(epochs=1, warmup_epochs=0, seed=0, **TINY)
        result = train(manifest, cfg, out_dir=tmp_path)
        from aigiqa.encoders import StubDualEncoder

        wrong = StubDualEncoder(identifier="stub:other", embed_dim=32, image_size=16)
        with pytest.raises(CheckpointMismatch):
            load_checkpoint(result.checkpoint_path, encoder=wrong)

    def test_similarity_checkpoint_round_trip(self, dataset_factory, tmp_path):
        manifest, _ = dataset_factory(count=8, split_ratio=0.75)
        cfg = TrainConfig(
            epochs=1, warmup_epochs=0, seed=0, scorer="similarity",
            **{k: v for k, v in TINY.items() if k != "hidden_dim"},
        )
        result = train(manifest, cfg, out_dir=tmp_path)
        model, _, payload = load_checkpoint(result.checkpoint_path)
        assert payload["head"] is None
        images = torch.randn(2, 3, 16, 16)
        with torch.no_grad():
            assert torch.equal(result.model(images), model(images))


class _OracleModel:
    """Returns queued normalized scores, ignoring the images."""

    def __init__(self, scores, image_size=16):
        self.scores = list(scores)
        self.encoder = type("E", (), {"image_size": image_size})()

    def __call__(self, images):
        out = self.scores[: images.shape[0]]
        del self.scores[: images.shape[0]]
        return torch.tensor(out)


class TestEvaluate:
    def test_oracle_injection_gives_perfect_metrics(self, dataset_factory):
        manifest, _ = dataset_factory(count=10, split_ratio=0.5)
        norm = normalize_labels(manifest)
        labels = [r.mos for r in norm.test_records]
        report = evaluate(_OracleModel(labels), norm)
        assert report.plcc == pytest.approx(1.0, abs=1e-12)
        assert report.srcc == pytest.approx(1.0, abs=1e-12)
        assert report.krcc == pytest.approx(1.0, abs=1e-12)

    def test_random_predictions_near_zero(self, dataset_factory):
        manifest, _ = dataset_factory(count=125, seed=9, split_ratio=0.2)
        norm = normalize_labels(manifest)
        n = len(norm.test_records)
        assert n == 100
        rng = np.random.default_rng(17)
        report = evaluate(_OracleModel(rng.uniform(0, 1, size=n).tolist()), norm)
        assert abs(report.plcc) < 0.5
        assert abs(report.srcc) < 0.5
        assert abs(report.krcc) < 0.5

    def test_empty_split(self, dataset_factory):
        manifest, _ = dataset_factory(count=6)
        with pytest.raises(EmptySplit):
            evaluate(_OracleModel([]), normalize_labels(manifest))

    def test_raw_scale_pairs(self, dataset_factory):
        # metrics must be computed on denormalized pairs; PLCC is affine-
        # invariant so the value matches the normalized computation
        manifest, _ = dataset_factory(count=10, split_ratio=0.5)
        norm = normalize_labels(manifest)
        labels = [r.mos for r in norm.test_records]
        preds = [0.9 * v + 0.05 for v in labels]
        report = evaluate(_OracleModel(preds), norm)
        assert report.plcc == pytest.approx(1.0, abs=1e-9)

    def test_trained_model_end_to_end(self, dataset_factory):
        manifest, _ = dataset_factory(count=10, split_ratio=0.8)
        cfg = TrainConfig(epochs=2, warmup_epochs=0, seed=0, **TINY)
        result = train(manifest, cfg)
        report = evaluate(result.model, normalize_labels(manifest), config_hash_value=cfg.hash())
        for value in (report.plcc, report.srcc, report.krcc):
            assert math.isfinite(value)
            assert -1.0 <= value <= 1.0
