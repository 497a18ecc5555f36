import numpy as np
import pytest

from reslstm.tasks import (
    TaskSpec, class_embeddings, gen_delayed_recall, gen_noisy_embedding, null_class, read_dataset, split,
    write_dataset,
)


def emb_spec(**kw):
    base = dict(task_kind="noisy_embedding", T=30, D=8, C=4, noise_sigma=0.5, num_sequences=20, seed=5)
    base.update(kw)
    return TaskSpec(**base)


def recall_spec(**kw):
    base = dict(task_kind="delayed_recall", T=30, D=8, C=5, noise_sigma=0.3, delay_k=4,
                num_sequences=20, seed=5)
    base.update(kw)
    return TaskSpec(**base)


def nearest_embedding_accuracy(spec, data):
    emb = class_embeddings(spec)
    frames = np.concatenate([d.frames for d in data])
    labels = np.concatenate([d.labels for d in data])
    pred = np.argmin(((frames[:, None, :] - emb[None]) ** 2).sum(-1), axis=1)
    return np.mean(pred == labels)


def test_noise_free_embedding_is_linearly_separable():
    spec = emb_spec(noise_sigma=0.0)
    data = gen_noisy_embedding(spec)
    emb = class_embeddings(spec)
    for d in data:
        # unit-norm class vectors: the linear score emb @ frame peaks at the true class
        np.testing.assert_array_equal(np.argmax(d.frames @ emb.T, axis=1), d.labels)


def test_noisy_embedding_is_reproducible():
    a, b = gen_noisy_embedding(emb_spec()), gen_noisy_embedding(emb_spec())
    for u, v in zip(a, b):
        assert u.frames.tobytes() == v.frames.tobytes() and u.labels.tobytes() == v.labels.tobytes()


def test_noisy_embedding_bayes_accuracy_between_chance_and_one():
    spec = emb_spec(noise_sigma=0.5, num_sequences=50)
    acc = nearest_embedding_accuracy(spec, gen_noisy_embedding(spec))
    assert 1 / spec.C < acc < 1.0


def test_noisy_embedding_self_transition_rate():
    spec = emb_spec(T=200, num_sequences=50)
    labels = np.stack([d.labels for d in gen_noisy_embedding(spec)])
    stay = np.mean(labels[:, 1:] == labels[:, :-1])
    assert abs(stay - 0.9) < 0.01


def test_delayed_recall_labels_are_shifted_symbols():
    spec = recall_spec(noise_sigma=0.0)
    for d in gen_delayed_recall(spec):
        symbols = np.argmax(d.frames, axis=1)
        k = spec.delay_k
        np.testing.assert_array_equal(d.labels[k:], symbols[:-k])
        assert np.all(d.labels[:k] == null_class(spec))
        assert np.all(symbols < spec.C - 1)


def test_zero_delay_is_symbol_identification():
    spec = recall_spec(delay_k=0, noise_sigma=0.0)
    for d in gen_delayed_recall(spec):
        np.testing.assert_array_equal(d.labels, np.argmax(d.frames, axis=1))


def test_delay_must_be_shorter_than_sequence():
    with pytest.raises(ValueError):
        gen_delayed_recall(recall_spec(delay_k=30))


def test_delayed_recall_is_reproducible():
    a, b = gen_delayed_recall(recall_spec()), gen_delayed_recall(recall_spec())
    assert all(u.frames.tobytes() == v.frames.tobytes() for u, v in zip(a, b))


def test_memoryless_classifier_is_near_chance():
    """A frame-wise softmax regression cannot beat chance on recalled labels."""
    spec = recall_spec(T=40, C=6, delay_k=5, num_sequences=100, noise_sigma=0.3)
    data = gen_delayed_recall(spec)
    k = spec.delay_k
    X = np.concatenate([d.frames[k:] for d in data])
    y = np.concatenate([d.labels[k:] for d in data])
    half = len(y) // 2
    W = np.zeros((spec.C, spec.D + 1))
    Xb = np.hstack([X, np.ones((len(X), 1))])
    onehot = np.eye(spec.C)[y[:half]]
    for _ in range(300):
        z = Xb[:half] @ W.T
        p = np.exp(z - z.max(axis=1, keepdims=True))
        p /= p.sum(axis=1, keepdims=True)
        W -= 0.5 * (p - onehot).T @ Xb[:half] / half
    acc = np.mean(np.argmax(Xb[half:] @ W.T, axis=1) == y[half:])
    n_symbols = spec.C - 1
    assert abs(acc - 1 / n_symbols) < 0.05


def test_split_sizes_and_partition():
    data = gen_noisy_embedding(emb_spec(num_sequences=100, T=5))
    train, cv = split(data, 0.1, 7)
    assert (len(train), len(cv)) == (90, 10)
    ids = sorted(id(d) for d in train + cv)
    assert ids == sorted(id(d) for d in data)
    train2, cv2 = split(data, 0.1, 7)
    assert [id(d) for d in cv] == [id(d) for d in cv2]


def test_split_rejects_empty_side():
    data = gen_noisy_embedding(emb_spec(num_sequences=3, T=5))
    with pytest.raises(ValueError):
        split(data, 0.1, 0)
    with pytest.raises(ValueError):
        split(data, 1.0, 0)


@pytest.mark.parametrize("spec", [emb_spec(T=7), recall_spec(T=9)])
def test_dataset_file_round_trip(tmp_path, spec):
    from reslstm.tasks import generate
    data = generate(spec)
    path = tmp_path / "data.txt"
    write_dataset(path, data, spec)
    back, header = read_dataset(path)
    assert header == {"T": spec.T, "D": spec.D, "C": spec.C, "kind": spec.task_kind, "seed": spec.seed}
    assert len(back) == len(data)
    for u, v in zip(data, back):
        assert u.frames.tobytes() == v.frames.tobytes()
        assert u.labels.tobytes() == v.labels.tobytes()
    lines = path.read_text().splitlines()
    assert lines[0] == "T,D,C,kind,seed"
    assert len(lines) == 2 + spec.T * spec.num_sequences
    assert lines[2].startswith("0,")


def test_dataset_reader_rejects_bad_rows(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("T,D,C,kind,seed\n2,2,3,noisy_embedding,0\n0,1,0.5\n")
    with pytest.raises(ValueError, match="expected 4 fields"):
        read_dataset(path)
