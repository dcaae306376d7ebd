"""Training machinery: Adam, splitting, augmentation, and both loops."""

import numpy as np
import pytest

import spoofsmith.train as TR
from spoofsmith import rng as srng
from spoofsmith.data import DatasetManifest, ManifestEntry, gen_toy_corpus
from spoofsmith.errors import (InsufficientDataError, InvalidArgumentError,
                               OptimStateError, StratifyError)
from spoofsmith.models import (build_dcgan_discriminator,
                               build_dcgan_generator, build_modified_vggnet)
from spoofsmith.tensor import Tensor
from spoofsmith.train import (AdamState, SplitConfig, TrainConfig, adam_step,
                              augment, split_dataset, synthesize,
                              train_classifier, train_gan)
from spoofsmith.verify import scalar_adam_reference


# -- Adam -----------------------------------------------------------------

def test_adam_first_step_hand_case():
    # p=1, g=1, lr=1e-3: m_hat = v_hat = 1, so p' = 1 - 1e-3/(1 + 1e-8).
    p = Tensor(np.array([1.0]), requires_grad=True, name="p")
    state = AdamState.for_params({"p": p})
    adam_step({"p": p}, {"p": np.array([1.0])}, state, 1e-3, 0.9, 0.999)
    assert state.t == 1
    assert p.data[0] == pytest.approx(1.0 - 1e-3 / (1.0 + 1e-8), abs=1e-15)


def test_adam_matches_scalar_reference_trajectory():
    gen = srng.stream(40)
    p = Tensor(np.array([0.3]), requires_grad=True, name="p")
    state = AdamState.for_params({"p": p})
    grads = [float(g) for g in gen.standard_normal(25)]
    it = iter(grads)
    ref = scalar_adam_reference(lambda _: next(it), 0.3, 25,
                                lr=2e-4, beta1=0.5, beta2=0.999)
    for g in grads:
        adam_step({"p": p}, {"p": np.array([g])}, state, 2e-4, 0.5, 0.999)
    assert abs(p.data[0] - ref[-1]) < 1e-10


def test_adam_zero_gradient_is_fixed_point():
    p = Tensor(np.array([2.0, -1.0]), requires_grad=True, name="p")
    state = AdamState.for_params({"p": p})
    for _ in range(3):
        adam_step({"p": p}, {"p": np.zeros(2)}, state, 1e-2, 0.9, 0.999)
    assert np.array_equal(p.data, [2.0, -1.0])


def test_adam_t_increments_once_per_call():
    p = Tensor(np.array([0.0]), requires_grad=True, name="a")
    q = Tensor(np.array([0.0]), requires_grad=True, name="b")
    params = {"a": p, "b": q}
    state = AdamState.for_params(params)
    adam_step(params, {"a": np.ones(1), "b": np.ones(1)}, state,
              1e-3, 0.9, 0.999)
    assert state.t == 1


def test_adam_missing_state_raises():
    p = Tensor(np.array([0.0]), requires_grad=True, name="p")
    with pytest.raises(OptimStateError):
        adam_step({"p": p}, {"p": np.ones(1)}, AdamState(), 1e-3, 0.9, 0.999)


def test_adam_snapshot_roundtrip_continues_identically():
    gen = srng.stream(41)
    grads = [np.array([float(g)]) for g in gen.standard_normal(10)]

    p1 = Tensor(np.array([0.5]), requires_grad=True, name="p")
    s1 = AdamState.for_params({"p": p1})
    for g in grads:
        adam_step({"p": p1}, {"p": g}, s1, 1e-3, 0.9, 0.999)

    p2 = Tensor(np.array([0.5]), requires_grad=True, name="p")
    s2 = AdamState.for_params({"p": p2})
    for g in grads[:5]:
        adam_step({"p": p2}, {"p": g}, s2, 1e-3, 0.9, 0.999)
    s2 = AdamState.from_snapshot(s2.snapshot())
    for g in grads[5:]:
        adam_step({"p": p2}, {"p": g}, s2, 1e-3, 0.9, 0.999)
    assert np.array_equal(p1.data, p2.data)


# -- config validation ----------------------------------------------------

def test_config_rejects_bad_betas():
    with pytest.raises(InvalidArgumentError):
        TrainConfig(beta1=1.0)
    with pytest.raises(InvalidArgumentError):
        TrainConfig(beta2=0.0)


def test_config_rejects_tiny_batch():
    with pytest.raises(InvalidArgumentError):
        TrainConfig(batch_size=1)


def test_split_config_rejects_bad_fraction():
    with pytest.raises(InvalidArgumentError):
        SplitConfig(train_fraction=1.0)


# -- splitting ------------------------------------------------------------

def _labeled(n_pos, n_neg):
    entries = [ManifestEntry(path=f"p{i}.png", label="bona_fide")
               for i in range(n_pos)]
    entries += [ManifestEntry(path=f"n{i}.png", label="attack")
                for i in range(n_neg)]
    return DatasetManifest(entries, base_dir="/nowhere")


def test_split_200_gives_160_40():
    train, test = split_dataset(_labeled(100, 100), SplitConfig(0.8, seed=0))
    assert (len(train), len(test)) == (160, 40)


def test_split_stratified_per_label_counts():
    train, test = split_dataset(_labeled(100, 100), SplitConfig(0.8, seed=1))
    for part, per_label in ((train, 80), (test, 20)):
        labels = [e.label for e in part]
        assert labels.count("bona_fide") == per_label
        assert labels.count("attack") == per_label


def test_split_disjoint_and_exhaustive():
    m = _labeled(37, 13)
    train, test = split_dataset(m, SplitConfig(0.8, seed=2))
    tr = {e.path for e in train}
    te = {e.path for e in test}
    assert tr.isdisjoint(te)
    assert tr | te == {e.path for e in m}


def test_split_deterministic_and_seed_sensitive():
    m = _labeled(30, 30)
    a1, _ = split_dataset(m, SplitConfig(0.8, seed=3))
    a2, _ = split_dataset(m, SplitConfig(0.8, seed=3))
    b1, _ = split_dataset(m, SplitConfig(0.8, seed=4))
    assert [e.path for e in a1] == [e.path for e in a2]
    assert [e.path for e in a1] != [e.path for e in b1]


def test_split_round_half_up_property():
    for n_pos in range(1, 40):
        m = _labeled(n_pos, 0)
        train, test = split_dataset(m, SplitConfig(0.8, seed=5))
        assert len(train) == int(np.floor(0.8 * n_pos + 0.5))
        assert len(train) + len(test) == n_pos


def test_split_tiny_stratum_raises_then_falls_back():
    m = _labeled(10, 1)
    with pytest.raises(StratifyError):
        split_dataset(m, SplitConfig(0.8, seed=6))
    train, test = split_dataset(
        m, SplitConfig(0.8, seed=6, allow_unstratified=True))
    assert len(train) + len(test) == 11


def test_split_empty_manifest_raises():
    with pytest.raises(InsufficientDataError):
        split_dataset(DatasetManifest([], base_dir="."), SplitConfig())


# -- augmentation ---------------------------------------------------------

def test_hflip_is_involution():
    gen = srng.stream(42)
    img = gen.uniform(-1, 1, size=(3, 8, 8)).astype(np.float32)
    assert np.array_equal(TR._hflip(TR._hflip(img)), img)


def test_hflip_hand_case():
    img = np.arange(6, dtype=np.float32).reshape(1, 2, 3)
    out = TR._hflip(img)
    assert np.array_equal(out[0], [[2, 1, 0], [5, 4, 3]])


def test_augment_preserves_shape_and_range():
    gen = srng.stream(43)
    for _ in range(25):
        img = gen.uniform(-1, 1, size=(3, 16, 16)).astype(np.float32)
        out = augment(img, TR.AUGMENT_OPS, gen)
        assert out.shape == img.shape
        assert out.min() >= -1.0 and out.max() <= 1.0
        assert np.all(np.isfinite(out))


def test_augment_deterministic_given_stream():
    img = srng.stream(44).uniform(-1, 1, size=(3, 16, 16)).astype(np.float32)
    a = augment(img, TR.AUGMENT_OPS, srng.stream(45, "aug"))
    b = augment(img, TR.AUGMENT_OPS, srng.stream(45, "aug"))
    assert np.array_equal(a, b)


def test_augment_no_ops_is_clamp_only():
    img = np.full((1, 4, 4), 2.0, dtype=np.float32)
    out = augment(img, (), srng.stream(46))
    assert np.all(out == 1.0)


def test_rotate_identity_at_zero_degrees():
    img = srng.stream(47).uniform(-1, 1, size=(3, 8, 8)).astype(np.float32)
    assert np.allclose(TR._rotate(img, 0.0), img, atol=1e-6)


def test_crop_full_scale_is_identity():
    img = srng.stream(48).uniform(-1, 1, size=(3, 8, 8)).astype(np.float32)
    assert np.allclose(TR._crop_resize(img, 1.0, 0.0, 0.0), img, atol=1e-6)


def test_bilinear_resize_constant_image():
    img = np.full((2, 5, 7), 0.25, dtype=np.float32)
    out = TR._bilinear_resize(img, 11, 3)
    assert out.shape == (2, 11, 3)
    assert np.allclose(out, 0.25, atol=1e-7)


# -- GAN loop -------------------------------------------------------------

def _gan_fixture(tmp_path, n=12, res=16):
    manifest = gen_toy_corpus(n, res, seed=50, out_dir=tmp_path / "toy")
    g = build_dcgan_generator(8, (3, res, res), 0.125, seed=51)
    d = build_dcgan_discriminator((3, res, res), 0.125, seed=52)
    return manifest, g, d


def test_train_gan_runs_and_records_history(tmp_path):
    manifest, g, d = _gan_fixture(tmp_path)
    cfg = TrainConfig(epochs=3, real_per_iter=6, seed=53, batch_size=6)
    res = train_gan(manifest, g, d, cfg)
    assert res.iterations == 3 * (12 // 6)
    assert [it for it, _, _ in res.history] == list(range(6))
    assert all(np.isfinite(dl) and np.isfinite(gl)
               for _, dl, gl in res.history)


def test_train_gan_label_discipline_via_hook(tmp_path):
    manifest, g, d = _gan_fixture(tmp_path)
    cfg = TrainConfig(epochs=1, real_per_iter=6, seed=54, batch_size=6)
    seen = []

    def on_iteration(it, d_targets, g_targets, **kw):
        seen.append((d_targets[0].copy(), d_targets[1].copy(),
                     g_targets.copy()))

    train_gan(manifest, g, d, cfg, hooks={"on_iteration": on_iteration})
    assert len(seen) == 2
    for ones, zeros, gen_target in seen:
        assert np.all(ones == 1.0) and np.all(zeros == 0.0)
        assert np.all(gen_target == 1.0)


def test_train_gan_bitwise_deterministic(tmp_path):
    manifest, _, _ = _gan_fixture(tmp_path)
    cfg = TrainConfig(epochs=2, real_per_iter=6, seed=55, batch_size=6)
    finals = []
    for _ in range(2):
        g = build_dcgan_generator(8, (3, 16, 16), 0.125, seed=51)
        d = build_dcgan_discriminator((3, 16, 16), 0.125, seed=52)
        res = train_gan(manifest, g, d, cfg)
        finals.append((res.history,
                       {k: t.data.copy() for k, t in g.params.items()}))
    assert finals[0][0] == finals[1][0]
    for k in finals[0][1]:
        assert np.array_equal(finals[0][1][k], finals[1][1][k])


def test_train_gan_updates_both_networks(tmp_path):
    manifest, g, d = _gan_fixture(tmp_path)
    g0 = {k: t.data.copy() for k, t in g.trainable().items()}
    d0 = {k: t.data.copy() for k, t in d.trainable().items()}
    cfg = TrainConfig(epochs=1, real_per_iter=6, seed=56, batch_size=6)
    train_gan(manifest, g, d, cfg)
    assert any(not np.array_equal(g.params[k].data, g0[k]) for k in g0)
    assert any(not np.array_equal(d.params[k].data, d0[k]) for k in d0)


def test_train_gan_too_few_reals(tmp_path):
    manifest, g, d = _gan_fixture(tmp_path, n=4)
    cfg = TrainConfig(epochs=1, real_per_iter=6, seed=57, batch_size=6)
    with pytest.raises(InsufficientDataError):
        train_gan(manifest, g, d, cfg)


# -- synthesis ------------------------------------------------------------

def test_synthesize_writes_pngs_and_manifest(tmp_path):
    g = build_dcgan_generator(8, (3, 16, 16), 0.125, seed=58)
    m = synthesize(g, 5, seed=59, out_dir=tmp_path / "synth")
    assert len(m) == 5
    assert all(e.label == "attack" for e in m)
    assert len(list((tmp_path / "synth").glob("synth_*.png"))) == 5
    assert (tmp_path / "synth" / "manifest.jsonl").exists()


def test_synthesize_bitwise_reproducible(tmp_path):
    g = build_dcgan_generator(8, (3, 16, 16), 0.125, seed=60)
    synthesize(g, 3, seed=61, out_dir=tmp_path / "a")
    synthesize(g, 3, seed=61, out_dir=tmp_path / "b")
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_synthesize_count_independent_of_batching(tmp_path):
    g = build_dcgan_generator(8, (3, 16, 16), 0.125, seed=62)
    m1 = synthesize(g, 7, seed=63, out_dir=tmp_path / "a", batch_size=3)
    m2 = synthesize(g, 7, seed=63, out_dir=tmp_path / "b", batch_size=64)
    assert len(m1) == len(m2) == 7


# -- classifier loop ------------------------------------------------------

def _labeled_image_manifest(tmp_path, n_per_label=8, res=32):
    """Real toy images as bona fide plus noise PNGs as attacks."""
    from spoofsmith.data import encode_image
    toy = gen_toy_corpus(n_per_label, res, seed=70, out_dir=tmp_path / "lab")
    gen = srng.stream(71)
    entries = list(toy.entries)
    for i in range(n_per_label):
        name = f"atk_{i:03d}.png"
        encode_image(gen.uniform(-1, 1, (3, res, res)).astype(np.float32),
                     tmp_path / "lab" / name)
        entries.append(ManifestEntry(path=name, label="attack"))
    return DatasetManifest(entries, base_dir=str(tmp_path / "lab"))


def test_train_classifier_zero_epochs_reports_untrained(tmp_path):
    labeled = _labeled_image_manifest(tmp_path)
    net = build_modified_vggnet((3, 32, 32), 0.125, 8, seed=72)
    res = train_classifier(labeled, net, TrainConfig.classifier(epochs=0, seed=73),
                           SplitConfig(0.8, seed=73))
    assert res.history == []
    assert 0.0 <= res.report.accuracy <= 1.0
    # Untrained scores should hover near chance, not saturate.
    assert 0.3 <= res.report.accuracy <= 0.7 or res.report.auc is not None


def test_train_classifier_learns_toy_vs_noise(tmp_path):
    labeled = _labeled_image_manifest(tmp_path, n_per_label=12)
    net = build_modified_vggnet((3, 32, 32), 0.25, 16, seed=74)
    res = train_classifier(
        labeled, net,
        TrainConfig.classifier(epochs=8, batch_size=4, seed=75,
                               learning_rate=1e-3),
        SplitConfig(0.8, seed=75))
    assert len(res.history) == 8
    assert res.report.auc >= 0.9


def test_train_classifier_single_label_rejected(tmp_path):
    toy = gen_toy_corpus(6, 32, seed=76, out_dir=tmp_path / "only")
    net = build_modified_vggnet((3, 32, 32), 0.125, 8, seed=77)
    with pytest.raises(InsufficientDataError):
        train_classifier(toy, net, TrainConfig.classifier(epochs=1),
                         SplitConfig(0.8))


def test_train_classifier_seed_determinism(tmp_path):
    labeled = _labeled_image_manifest(tmp_path)
    outs = []
    for _ in range(2):
        net = build_modified_vggnet((3, 32, 32), 0.125, 8, seed=78)
        res = train_classifier(
            labeled, net,
            TrainConfig.classifier(epochs=2, batch_size=4, seed=79),
            SplitConfig(0.8, seed=79))
        outs.append((res.history,
                     {k: t.data.copy() for k, t in net.params.items()}))
    assert outs[0][0] == outs[1][0]
    for k in outs[0][1]:
        assert np.array_equal(outs[0][1][k], outs[1][1][k])
