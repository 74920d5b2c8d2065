"""Acceptance suite: one test per numbered criterion, each printing a
PASS/FAIL line with the measured figure next to its threshold.

Run with `pytest tests/test_acceptance.py -v -s`.
"""

import time

import numpy as np
import pytest

from stadnet import attention, classifier, cli, depth, embed, features, filtering, sequences, synth
from stadnet.core import GestureSequence, NECK, missing_points, KeypointFrame, VideoSample

from reference_filter import filtered_blocks, random_sample, reference_filter


def report(criterion: int, ok: bool, detail: str) -> None:
    print(f"ACCEPTANCE {criterion:02d} {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {criterion}: {detail}"


# ---------------------------------------------------------------------------
# shared fixtures
# ---------------------------------------------------------------------------

@pytest.fixture(scope="session")
def trained_neck_estimator():
    """f_n trained on 5,000 pose/depth pairs spanning the working depth range,
    plus a 1,000-pair held-out set and a brute-force 1-NN baseline."""
    started = time.perf_counter()
    data = synth.generate_depth_training_set(20, 8, seed=101)
    pairs = cli.build_depth_pairs(data)
    x, d = pairs["neck"]
    order = np.random.default_rng(0).permutation(len(x))
    x, d = x[order], d[order]
    x_train, d_train = x[:5000], d[:5000]
    x_held, d_held = x[5000:6000], d[5000:6000]

    net = depth.DepthNet(seed=0)
    net, losses = depth.train(net, x_train, d_train,
                              depth.TrainConfig(epochs=400, batch_size=64, seed=0))
    mse = depth.evaluate_mse(net, x_held, d_held)

    mu, sd = x_train.mean(axis=0), x_train.std(axis=0)
    sd[sd == 0] = 1.0
    a = (x_train - mu) / sd
    b = (x_held - mu) / sd
    dist = (b * b).sum(axis=1)[:, None] + (a * a).sum(axis=1)[None, :] - 2.0 * b @ a.T
    nn_mse = float(np.mean((d_train[np.argmin(dist, axis=1)] - d_held) ** 2))
    runtime = time.perf_counter() - started
    return {"net": net, "mse": mse, "nn_mse": nn_mse, "runtime": runtime,
            "train_losses": losses}


@pytest.fixture(scope="session")
def gesture_dataset():
    """8 synthetic classes x 45 clips (noisy), featurized with ground-truth
    depth, split 25/10/10 per class and standardized on the training split."""
    noise = synth.NoiseParams(dropout=0.05, jitter=1.5)
    data, _manifest = synth.generate_dataset(45, 8, seed=7, noise=noise)
    embedder = embed.GeometricEmbedder(dim=64, seed=0)
    seqs = []
    for sample, depths in data:
        filtered = filtering.filter_video(sample).sample
        gt = cli.GroundTruthDepths({
            (sample.source_id, f.frame_index): tuple(depths[f.frame_index])
            for f in sample.frames})
        rows, _meta = cli.featurize_sample(filtered, embedder, gt)
        feats, mask = sequences.fix_length(rows)
        seqs.append(GestureSequence(features=feats, label=sample.label,
                                    pad_mask=mask, source_id=sample.source_id))
    train_set, valid_set, test_set = sequences.stratified_split(seqs, (25, 10, 10), seed=5)
    stats = sequences.fit_standardization(train_set)
    return {
        "train": sequences.standardize(train_set, stats),
        "valid": sequences.standardize(valid_set, stats),
        "test": sequences.standardize(test_set, stats),
        "stats": stats,
    }


def train_desk_net(dataset, seed: int, n_classes: int = 8, subset_labels=None):
    def pick(split):
        seqs = dataset[split]
        if subset_labels is not None:
            seqs = [s for s in seqs if s.label in subset_labels]
        return classifier.dataset_arrays(seqs)

    net = classifier.GestureNet(classifier.desk_config(n_classes=n_classes,
                                                       embed_dim=64, seed=seed))
    net.stats = dataset["stats"]
    schedule = classifier.default_schedule(n_blocks=2, max_epochs=25, patience=5)
    curves = classifier.train_phases(net, pick("train"), pick("valid"), schedule,
                                     classifier.ClassifierTrainConfig(seed=seed))
    return net, curves


def test_accuracy(net, dataset, subset_labels=None) -> float:
    seqs = dataset["test"]
    if subset_labels is not None:
        seqs = [s for s in seqs if s.label in subset_labels]
    x, real, y = classifier.dataset_arrays(seqs)
    probs = net.forward_sequence(x, ~real)
    return float(np.mean(np.argmax(probs, axis=1) == y))


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------

def test_criterion_01_filter_oracle_equivalence():
    started = time.perf_counter()
    rng = np.random.default_rng(42)
    mismatches = 0
    for trial in range(10_000):
        length = int(rng.integers(7, 61))
        dropout = float(rng.uniform(0.0, 0.30))
        sample = random_sample(rng, length, dropout, source_id=f"t{trial}")
        ours_idx, ours_arr = filtered_blocks(
            filtering.filter_video(sample).sample.frames)
        ref_idx, ref_arr = reference_filter(sample)
        if ours_idx != ref_idx:
            mismatches += 1
            continue
        if ours_arr and not np.array_equal(np.array(ours_arr), np.array(ref_arr),
                                           equal_nan=True):
            mismatches += 1
    runtime = time.perf_counter() - started
    report(1, mismatches == 0 and runtime < 60.0,
           f"{mismatches} mismatches over 10000 sequences in {runtime:.1f}s (< 60 s)")


def test_criterion_02_filter_fixed_point():
    rng = np.random.default_rng(2)
    body = rng.uniform(0, 640, (8, 2))
    lh = rng.uniform(0, 640, (21, 2))
    rh = rng.uniform(0, 640, (21, 2))
    frames = [KeypointFrame(frame_index=k, body=body.copy(), left_hand=lh.copy(),
                            right_hand=rh.copy(), fps=30.0) for k in range(30)]
    result = filtering.filter_video(VideoSample("const", frames))
    worst = 0.0
    for f in result.sample.frames:
        worst = max(worst,
                    float(np.abs(f.body - body).max()),
                    float(np.abs(f.left_hand - lh).max()),
                    float(np.abs(f.right_hand - rh).max()))
    report(2, worst <= 1e-9, f"constant skeleton deviation {worst:.2e} (<= 1e-9)")


def test_criterion_03_feature_dimensions():
    data, _ = synth.generate_dataset(25, 8, seed=33,
                                     noise=synth.NoiseParams(dropout=0.05, jitter=1.0))
    assert len(data) == 200
    embedder = embed.GeometricEmbedder(dim=64, seed=0)
    violations = 0
    for sample, depths in data:
        filtered = filtering.filter_video(sample).sample
        normalized = []
        for frame in filtered.frames:
            if np.isnan(frame.body[NECK, 0]):
                continue
            pose = features.augment_pose(frame.body)
            if pose.values.shape != (97,):
                violations += 1
            for side in ("left", "right"):
                hand = features.augment_hand(cli.hand_chain(frame, side))
                if hand.values.shape != (54,):
                    violations += 1
            dn = depths[frame.frame_index, 0]
            normalized.append(attention.normalize_skeleton(frame.body, dn).joints)
        seq = np.stack(normalized)
        for k in range(len(seq)):
            if features.dynamic_pose(seq, k, filtered.fps).values.shape != (129,):
                violations += 1
        fixed, mask = sequences.fix_length(
            np.zeros((len(seq), 2 * 64 + 129), dtype=np.float32))
        if fixed.shape[0] != 40 or mask.shape != (40,):
            violations += 1
    report(3, violations == 0,
           f"{violations} dimension violations over 200 samples (97/54/129/40)")


def test_criterion_04_derivative_correctness():
    fps, c, alpha = 30.0, 1.3, 0.21
    linear = np.stack([np.full((8, 2), [c * k, 0.0]) for k in range(20)])
    quad = np.stack([np.full((8, 2), [alpha * k * k, 0.0]) for k in range(20)])
    worst = 0.0
    for k in range(1, 19):
        v = features.velocity(linear, k, fps).reshape(8, 2)
        worst = max(worst, float(np.abs(v[:, 0] - 2 * c * fps).max()))
    for k in range(2, 18):
        a = features.acceleration(quad, k, fps).reshape(8, 2)
        worst = max(worst, float(np.abs(a[:, 0] - 8 * alpha * fps * fps).max()))
    report(4, worst <= 1e-6,
           f"max deviation from closed forms {worst:.2e} (<= 1e-6, interior frames)")


def test_criterion_05_gradient_checks():
    started = time.perf_counter()
    rng = np.random.default_rng(55)
    worst_mlp = 0.0
    sizes = (6, 10, 10, 8, 8, 6, 6, 4, 3, 1)
    done = 0
    attempts = 0
    while done < 50 and attempts < 500:
        attempts += 1
        net = depth.DepthNet(sizes=sizes, seed=attempts)
        for i in range(depth.LAYER_COUNT):
            net.biases[i][:] = rng.uniform(0.05, 0.2, size=net.biases[i].shape)
        x = rng.normal(size=(2, 6))
        if net.min_kink_margin(x) < 1e-3:
            continue
        worst_mlp = max(worst_mlp, depth.gradient_check(net, x, rng.normal(size=2)))
        done += 1
    assert done == 50

    worst_lstm = 0.0
    done = 0
    attempts = 0
    while done < 50 and attempts < 500:
        attempts += 1
        cfg = classifier.GestureNetConfig(
            embed_dim=1, n_classes=3, td_units=3, lstm_units=(3, 3), dropout=0.0,
            use_batchnorm=(attempts % 5 == 0), seed=attempts)
        net = classifier.GestureNet(cfg)
        x = rng.normal(size=(1, 4, cfg.feature_dim))
        real = np.ones((1, 4), dtype=bool)
        real[0, -1] = bool(attempts % 2)
        y = rng.integers(0, 3, size=1)
        if net.min_kink_margin(x, real) < 1e-3:
            continue
        _, grads, _ = net.loss_and_grads(x, real, y, dropout_rng=None)
        step = 1e-5
        for name, tensor in net.params.items():
            flat = tensor.reshape(-1)
            g = grads[name].reshape(-1)
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + step
                up, _, _ = net.loss_and_grads(x, real, y, dropout_rng=None)
                flat[j] = orig - step
                down, _, _ = net.loss_and_grads(x, real, y, dropout_rng=None)
                flat[j] = orig
                numeric = (up - down) / (2 * step)
                worst_lstm = max(worst_lstm, abs(g[j] - numeric) /
                                 max(abs(g[j]), abs(numeric), 1e-6))
        done += 1
    assert done == 50
    runtime = time.perf_counter() - started
    ok = worst_mlp < 1e-4 and worst_lstm < 1e-4 and runtime < 300.0
    report(5, ok, f"100 draws: worst rel err MLP {worst_mlp:.2e}, "
                  f"LSTM {worst_lstm:.2e} (< 1e-4) in {runtime:.0f}s (< 300 s)")


def test_criterion_06_depth_estimator_efficacy(trained_neck_estimator):
    r = trained_neck_estimator
    ok = r["mse"] <= 5e-3 and r["mse"] <= 0.5 * r["nn_mse"] and r["runtime"] < 600.0
    report(6, ok,
           f"held-out MSE {r['mse']:.2e} (<= 5e-3), 1-NN baseline {r['nn_mse']:.2e} "
           f"(>= 2x margin: {r['nn_mse'] / r['mse']:.0f}x) in {r['runtime']:.0f}s (< 600 s)")


def test_criterion_07_scale_normalization(trained_neck_estimator):
    net = trained_neck_estimator["net"]
    worst_gt = 0.0
    learned_devs = []
    for cls in range(8):
        near, d_near = synth.generate(cls, seed=777 + cls, n_frames=40)
        far, d_far = synth.generate(cls, seed=777 + cls, n_frames=40, depth_scale=2.0)
        for k in range(40):
            a = attention.normalize_skeleton(near.frames[k].body, d_near[k, 0]).joints
            b = attention.normalize_skeleton(far.frames[k].body, d_far[k, 0]).joints
            worst_gt = max(worst_gt, float(np.abs(a - b).max()))
            da = net.forward(features.augment_pose(near.frames[k].body).values)
            db = net.forward(features.augment_pose(far.frames[k].body).values)
            na = attention.normalize_skeleton(near.frames[k].body, da).joints
            nb = attention.normalize_skeleton(far.frames[k].body, db).joints
            learned_devs.append(np.linalg.norm(na - nb, axis=1))
    median_dev = float(np.median(np.concatenate(learned_devs)))
    ok = worst_gt <= 1e-5 and median_dev <= 0.05
    report(7, ok, f"ground-truth deviation {worst_gt:.2e} (<= 1e-5), "
                  f"learned median joint deviation {median_dev:.4f} (<= 0.05)")


def test_criterion_08_end_to_end_classification(gesture_dataset):
    started = time.perf_counter()
    net_a, _curves = train_desk_net(gesture_dataset, seed=11)
    acc_a = test_accuracy(net_a, gesture_dataset)
    net_b, _ = train_desk_net(gesture_dataset, seed=11)
    acc_b = test_accuracy(net_b, gesture_dataset)
    identical = all(np.array_equal(net_a.params[k], net_b.params[k])
                    for k in net_a.params)
    runtime = time.perf_counter() - started
    ok = acc_a >= 0.95 and identical and acc_a == acc_b and runtime < 900.0
    report(8, ok, f"test accuracy {acc_a:.3f} (>= 0.95), rerun identical "
                  f"params={identical}, in {runtime:.0f}s (< 900 s)")


def test_criterion_09_freeze_contract(gesture_dataset):
    net = classifier.GestureNet(classifier.desk_config(n_classes=8, embed_dim=64, seed=4))
    phase1 = classifier.Phase("phase1", frozenset({"head"}), max_epochs=3, patience=3)
    rest = classifier.Phase("rest", frozenset(net.layer_names), 0, 0)
    before = classifier.freeze_hash(net, phase1.unfrozen)
    classifier.train_phases(
        net, classifier.dataset_arrays(gesture_dataset["train"]),
        classifier.dataset_arrays(gesture_dataset["valid"]),
        [phase1, rest], classifier.ClassifierTrainConfig(seed=4))
    after = classifier.freeze_hash(net, phase1.unfrozen)
    report(9, before == after,
           f"frozen-tensor hash unchanged across phase-1 training ({after[:12]}...)")


def test_criterion_10_transfer_head_swap(gesture_dataset):
    started = time.perf_counter()
    subset = {0, 1, 2, 3}
    pre_net, _ = train_desk_net(gesture_dataset, seed=21, n_classes=4,
                                subset_labels=subset)
    non_head_before = {k: v.copy() for k, v in pre_net.params.items()
                      if not k.startswith("head/")}
    classifier.swap_head(pre_net, 8, seed=22)
    preserved = all(np.array_equal(pre_net.params[k], v)
                    for k, v in non_head_before.items())

    schedule = classifier.default_schedule(n_blocks=2, max_epochs=25, patience=5)
    classifier.train_phases(
        pre_net, classifier.dataset_arrays(gesture_dataset["train"]),
        classifier.dataset_arrays(gesture_dataset["valid"]),
        schedule, classifier.ClassifierTrainConfig(seed=23))
    acc = test_accuracy(pre_net, gesture_dataset)
    runtime = time.perf_counter() - started
    ok = preserved and acc >= 0.95 and runtime < 900.0
    report(10, ok, f"non-head tensors preserved={preserved}, post-swap accuracy "
                   f"{acc:.3f} (>= 0.95) in {runtime:.0f}s")


def test_criterion_11_cli_determinism(tmp_path):
    def pipeline(root):
        gen = root / "gen"
        assert cli.main(["synth-gen", "--classes", "4", "--per-class", "6",
                         "--dropout", "0.03", "--jitter", "0.8", "--seed", "13",
                         "--out", str(gen)]) == 0
        filtered = root / "filtered.jsonl"
        assert cli.main(["filter", "--in", str(gen / "stream.jsonl"),
                         "--out", str(filtered)]) == 0
        feats, pairs = root / "feats", root / "pairs"
        assert cli.main(["featurize", "--in", str(filtered), "--out-dir", str(feats),
                         "--manifest", str(gen / "manifest.json"),
                         "--depths", str(gen / "depths.jsonl"), "--use-gt-depth",
                         "--embed-dim", "16", "--emit-depth-pairs", str(pairs)]) == 0
        assert cli.main(["train-depth", "--which", "neck",
                         "--data", str(pairs / "pairs_neck.stad"),
                         "--out", str(root / "fn.stad"), "--epochs", "15"]) == 0
        assert cli.main(["prepare", "--in", str(feats), "--out", str(root / "data.stad"),
                         "--split", "4/1/1", "--seed", "3"]) == 0
        assert cli.main(["train", "--data", str(root / "data.stad"), "--preset", "desk",
                         "--embed-dim", "16", "--seed", "2", "--max-epochs", "4",
                         "--patience", "2", "--out", str(root / "gnet.stad")]) == 0
        assert cli.main(["eval", "--model", str(root / "gnet.stad"),
                         "--data", str(root / "data.stad"),
                         "--out-prefix", str(root / "eval")]) == 0

    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir(), b.mkdir()
    pipeline(a)
    pipeline(b)
    compared = []
    for rel in ["gen/stream.jsonl", "gen/depths.jsonl", "gen/manifest.json",
                "filtered.jsonl", "pairs/pairs_neck.stad", "fn.stad", "data.stad",
                "gnet.stad", "eval_metrics.json", "eval_confusion.csv"]:
        compared.append(((a / rel).read_bytes() == (b / rel).read_bytes(), rel))
    for fa, fb in zip(sorted((a / "feats").glob("*.stad")),
                      sorted((b / "feats").glob("*.stad"))):
        compared.append((fa.read_bytes() == fb.read_bytes(), fa.name))
    bad = [rel for ok, rel in compared if not ok]
    report(11, not bad,
           f"{len(compared)} artifacts byte-identical across reruns"
           + (f"; differing: {bad}" if bad else ""))
