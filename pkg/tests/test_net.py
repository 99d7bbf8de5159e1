import numpy as np
import pytest
import torch
import torch.nn.functional as F

from dgadetect.domain import ALPHABET, CharVocab
from dgadetect.net import (
    BundleError,
    EarlyStopper,
    NetBundle,
    NetConfig,
    NetError,
    TrainConfig,
    encode_batch,
    extract_features,
    forward_batch,
    init_net,
    length_schedule,
    load_bundle,
    net_config_for,
    penultimate_tap,
    save_bundle,
    tap_dim,
    tap_registry,
    train_net,
)
from dgadetect.synth import FamilySpec, generate_family

CLASSES3 = ("a", "b", "c")


def small_cfg(**kw):
    base = dict(classes=CLASSES3, embed_dim=4, blocks=1, channels=4,
                kernel=3, pool=2, max_len=8, vocab_size=10)
    base.update(kw)
    return NetConfig(**base)


def two_family_samples(n=500):
    fa = FamilySpec("fam_alpha", "restricted-alpha", "abcdefghijklm",
                    10, 14, ("eu",), seed=21)
    fb = FamilySpec("fam_digit", "arith-prng", "0123456789",
                    10, 14, ("pw",), seed=22)
    return generate_family(fa, n) + generate_family(fb, n)


class TestRegistry:
    def test_tap_count_blocks3_all_pools_active(self):
        cfg = NetConfig(classes=CLASSES3, blocks=3, max_len=64, pool=2)
        assert len(tap_registry(cfg)) == 1 + 3 * 3 + 1

    def test_tap_count_blocks11_pool_skipping(self):
        cfg = NetConfig(classes=CLASSES3, blocks=11, max_len=64, pool=2)
        sched = length_schedule(cfg)
        # 64 -> 32 -> 16 -> 8 -> 4 -> 2 -> 1, then pooling skipped
        assert [after for _, after in sched] == [32, 16, 8, 4, 2, 1, 1, 1, 1, 1, 1]
        pooled = sum(1 for p, _ in sched if p)
        assert pooled == 6
        assert len(tap_registry(cfg)) == 1 + 11 * 2 + pooled + 1

    def test_penultimate_tap(self):
        cfg = NetConfig(classes=CLASSES3, blocks=3, max_len=64, pool=2)
        assert penultimate_tap(cfg) == "block3/post_pool"

    def test_tap_dims(self):
        cfg = NetConfig(classes=CLASSES3, blocks=3, channels=64, max_len=64, pool=2)
        assert tap_dim(cfg, "embed") == 32 * 64
        assert tap_dim(cfg, "block1/post_pool") == 64 * 32
        assert tap_dim(cfg, "block3/post_pool") == 64 * 8
        assert tap_dim(cfg, "logits") == 3
        with pytest.raises(NetError):
            tap_dim(cfg, "block9/pre_relu")

    def test_bad_config_rejected(self):
        with pytest.raises(NetError):
            NetConfig(classes=CLASSES3, embed_dim=0)
        with pytest.raises(NetError):
            NetConfig(classes=("only",))


class TestInitForward:
    def test_init_deterministic(self):
        cfg = small_cfg()
        a = init_net(cfg, 5).state_dict()
        b = init_net(cfg, 5).state_dict()
        for k in a:
            assert torch.equal(a[k], b[k])
        c = init_net(cfg, 6).state_dict()
        assert any(not torch.equal(a[k], c[k]) for k in a)

    def test_biases_zero_at_init(self):
        model = init_net(small_cfg(), 1)
        for name, p in model.named_parameters():
            if name.endswith("bias"):
                assert torch.count_nonzero(p) == 0

    def test_zeroed_dense_gives_uniform(self):
        cfg = small_cfg()
        model = init_net(cfg, 2)
        with torch.no_grad():
            model.dense.weight.zero_()
            model.dense.bias.zero_()
        bundle = NetBundle(cfg, CharVocab("abcdefgh", max_len=8), model)
        ids = np.array([[0, 0, 2, 3, 4, 5, 6, 7]])
        probs = forward_batch(bundle, ids)
        assert np.allclose(probs, 1.0 / 3.0, atol=1e-6)

    def test_softmax_sums_to_one(self):
        cfg = small_cfg()
        bundle = NetBundle(cfg, CharVocab("abcdefgh", max_len=8), init_net(cfg, 3))
        ids = np.random.default_rng(0).integers(0, 10, size=(32, 8))
        probs = forward_batch(bundle, ids)
        assert np.all(probs >= 0)
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-6)

    def test_argmax_invariant_under_bias_shift(self):
        cfg = small_cfg()
        model = init_net(cfg, 4)
        bundle = NetBundle(cfg, CharVocab("abcdefgh", max_len=8), model)
        ids = np.random.default_rng(1).integers(0, 10, size=(16, 8))
        before = forward_batch(bundle, ids).argmax(axis=1)
        with torch.no_grad():
            model.dense.bias += 7.5
        after = forward_batch(bundle, ids).argmax(axis=1)
        assert np.array_equal(before, after)

    def test_bias_bump_raises_class_probability(self):
        cfg = small_cfg()
        model = init_net(cfg, 4)
        bundle = NetBundle(cfg, CharVocab("abcdefgh", max_len=8), model)
        ids = np.random.default_rng(2).integers(0, 10, size=(8, 8))
        p0 = forward_batch(bundle, ids)[:, 1]
        with torch.no_grad():
            model.dense.bias[1] += 2.0
        p1 = forward_batch(bundle, ids)[:, 1]
        assert np.all(p1 > p0)

    def test_forward_with_taps_matches_forward(self):
        cfg = small_cfg()
        model = init_net(cfg, 5)
        ids = torch.randint(0, 10, (4, 8))
        logits, taps = model.forward_taps(ids)
        assert torch.equal(logits, model(ids))
        assert list(taps) == list(tap_registry(cfg))


class TestGradientCheck:
    def test_analytic_matches_finite_differences(self):
        torch.manual_seed(0)
        cfg = small_cfg()
        model = init_net(cfg, 7).double()
        x = torch.randint(0, 10, (5, 8))
        y = torch.tensor([0, 1, 2, 0, 1])

        def loss_fn():
            return F.cross_entropy(model(x), y)

        loss = loss_fn()
        loss.backward()
        h = 1e-5
        rng = np.random.default_rng(3)
        for name, p in model.named_parameters():
            grad = p.grad.detach().clone()
            flat = p.detach().reshape(-1)
            picks = rng.choice(flat.numel(), size=min(4, flat.numel()),
                               replace=False)
            for idx in picks:
                orig = flat[idx].item()
                with torch.no_grad():
                    flat[idx] = orig + h
                    up = loss_fn().item()
                    flat[idx] = orig - h
                    down = loss_fn().item()
                    flat[idx] = orig
                fd = (up - down) / (2 * h)
                an = grad.reshape(-1)[idx].item()
                denom = max(abs(fd) + abs(an), 1e-8)
                assert abs(fd - an) / denom < 1e-6, (name, idx, fd, an)


class TestEarlyStopper:
    def test_patience_example(self):
        s = EarlyStopper(patience=3)
        stops = []
        for loss in [1.0, 0.9, 0.95, 0.96, 0.97]:
            s.update(loss)
            stops.append(s.should_stop)
        assert stops == [False, False, False, False, True]
        assert s.best_epoch == 2

    def test_no_improvement_keeps_first_epoch(self):
        s = EarlyStopper(patience=3)
        for loss in [1.0, 1.0, 1.0, 1.0]:
            s.update(loss)
        assert s.best_epoch == 1
        assert s.should_stop


class TestTraining:
    def test_separable_families_high_accuracy(self):
        samples = two_family_samples(500)
        vocab = CharVocab(ALPHABET, 32)
        cfg = net_config_for(samples, vocab, embed_dim=8, blocks=1, channels=16)
        bundle = train_net(
            samples, vocab, TrainConfig(max_epochs=10, rng_seed=3), cfg
        )
        ids = encode_batch([s.domain for s in samples], vocab)
        preds = forward_batch(bundle, ids).argmax(axis=1)
        truth = np.array([bundle.classes.index(s.label) for s in samples])
        assert (preds == truth).mean() >= 0.99

    def test_single_class_rejected(self):
        samples = two_family_samples(20)[:20]
        vocab = CharVocab(ALPHABET, 32)
        with pytest.raises(NetError):
            train_net(samples, vocab, TrainConfig(max_epochs=1, rng_seed=1))

    def test_training_deterministic(self):
        samples = two_family_samples(80)
        vocab = CharVocab(ALPHABET, 32)
        cfg = net_config_for(samples, vocab, embed_dim=4, blocks=1, channels=8)
        tc = TrainConfig(max_epochs=2, rng_seed=9)
        a = train_net(samples, vocab, tc, cfg).model.state_dict()
        b = train_net(samples, vocab, tc, cfg).model.state_dict()
        for k in a:
            assert torch.equal(a[k], b[k])


class TestFeatures:
    def _bundle(self):
        cfg = NetConfig(classes=CLASSES3, embed_dim=4, blocks=2, channels=8,
                        kernel=3, pool=2, max_len=16, vocab_size=41)
        return NetBundle(cfg, CharVocab(ALPHABET, 16), init_net(cfg, 11))

    def test_dims_and_determinism(self):
        bundle = self._bundle()
        ids = np.random.default_rng(5).integers(0, 41, size=(6, 16))
        for tap in tap_registry(bundle.net_cfg):
            f1 = extract_features(bundle, ids, tap)
            f2 = extract_features(bundle, ids, tap)
            assert f1.shape == (6, tap_dim(bundle.net_cfg, tap))
            assert np.array_equal(f1, f2)

    def test_penultimate_dim_is_channels_times_final_len(self):
        bundle = self._bundle()
        cfg = bundle.net_cfg
        final_len = length_schedule(cfg)[-1][1]
        assert tap_dim(cfg, penultimate_tap(cfg)) == cfg.channels * final_len

    def test_unknown_tap_rejected(self):
        bundle = self._bundle()
        with pytest.raises(NetError):
            extract_features(bundle, np.zeros((1, 16), dtype=np.int64), "nope")


class TestBundleIO:
    def _trained(self):
        samples = two_family_samples(60)
        vocab = CharVocab(ALPHABET, 32)
        cfg = net_config_for(samples, vocab, embed_dim=4, blocks=1, channels=8)
        return train_net(samples, vocab, TrainConfig(max_epochs=1, rng_seed=2), cfg)

    def test_roundtrip_bit_exact(self, tmp_path):
        bundle = self._trained()
        save_bundle(bundle, tmp_path / "b")
        back = load_bundle(tmp_path / "b")
        assert back.classes == bundle.classes
        a, b = bundle.model.state_dict(), back.model.state_dict()
        for k in a:
            assert torch.equal(a[k], b[k])

    def test_corrupted_checksum_rejected(self, tmp_path):
        bundle = self._trained()
        save_bundle(bundle, tmp_path / "b")
        w = tmp_path / "b" / "weights.bin"
        raw = bytearray(w.read_bytes())
        raw[10] ^= 0xFF
        w.write_bytes(bytes(raw))
        with pytest.raises(BundleError):
            load_bundle(tmp_path / "b")

    def test_truncated_blob_rejected(self, tmp_path):
        bundle = self._trained()
        save_bundle(bundle, tmp_path / "b")
        w = tmp_path / "b" / "weights.bin"
        w.write_bytes(w.read_bytes()[:3])
        with pytest.raises(BundleError):
            load_bundle(tmp_path / "b")

    def test_version_mismatch_rejected(self, tmp_path):
        import json

        bundle = self._trained()
        save_bundle(bundle, tmp_path / "b")
        m = tmp_path / "b" / "manifest.json"
        manifest = json.loads(m.read_text())
        manifest["format_version"] = 999
        m.write_text(json.dumps(manifest))
        with pytest.raises(BundleError):
            load_bundle(tmp_path / "b")

    def test_class_order_preserved(self, tmp_path):
        bundle = self._trained()
        save_bundle(bundle, tmp_path / "b")
        assert load_bundle(tmp_path / "b").classes == bundle.classes
