import numpy as np
import pytest

from zlab.adversary import UserProfile, generate_session, separable_rows
from zlab.classifier import (
    InsufficientClasses,
    TrainingSet,
    class_weights_for,
    dumps_model,
    fit_gain_ratio_tree,
    leave_one_user_out,
    loads_model,
    predict3,
    predict5,
    train_forest,
    train_vote_tree,
    votes_to_kind,
)
from zlab.evaluation import confusion_matrix
from zlab.features import FeatureVector, N_FEATURES
from zlab.interactions import BASE_KINDS, InteractionKind as K
from zlab.pipeline import PipelineConfig, training_rows


def separable(n=600, seed=0, users=1):
    X, y, u = separable_rows(n, seed, n_users=users)
    return TrainingSet(X, y, u)


@pytest.fixture(scope="module")
def small_forest():
    return train_forest(separable(300, 1), seed=5, n_trees=25)


def test_single_class_is_rejected():
    X, _, u = separable_rows(30, 0)
    with pytest.raises(InsufficientClasses):
        train_forest(TrainingSet(X, np.full(30, int(K.TYPING)), u), seed=0)


def test_same_seed_same_model():
    data = separable(200, 2)
    a = train_forest(data, seed=9, n_trees=15)
    b = train_forest(data, seed=9, n_trees=15)
    assert a.structure_equal(b)
    assert not a.structure_equal(train_forest(data, seed=10, n_trees=15))


def test_thread_count_does_not_change_model(monkeypatch):
    data = separable(200, 2)
    monkeypatch.setenv("ZLAB_THREADS", "1")
    a = train_forest(data, seed=4, n_trees=10)
    monkeypatch.setenv("ZLAB_THREADS", "2")
    b = train_forest(data, seed=4, n_trees=10)
    assert a.structure_equal(b)


def test_row_order_does_not_change_predictions():
    data = separable(240, 3)
    perm = np.random.default_rng(0).permutation(len(data))
    shuffled = data.subset(perm)
    test = separable(90, 99)
    a = train_forest(data, seed=1, n_trees=15).votes(test.X)
    b = train_forest(shuffled, seed=1, n_trees=15).votes(test.X)
    assert np.array_equal(a, b)


def test_holdout_accuracy_on_separable_set():
    data = separable(600, 11)
    idx = np.random.default_rng(11).permutation(600)
    train, test = data.subset(idx[:420]), data.subset(idx[420:])
    forest = train_forest(train, seed=0)
    pred = forest.predict(test.X)
    assert np.mean(pred == test.y) >= 0.95
    cm = confusion_matrix([K(v) for v in test.y], [K(v) for v in pred])
    for k in BASE_KINDS:
        assert cm.precision[k] >= 0.90 and cm.recall[k] >= 0.90


def test_tree_invariants(small_forest):
    for tree in small_forest.trees:
        inner = tree.left >= 0
        assert np.all((tree.feature[inner] >= 0) & (tree.feature[inner] < N_FEATURES))
        assert np.all(np.isfinite(tree.threshold))
        reach = {0}
        stack = [0]
        while stack:
            i = stack.pop()
            if tree.left[i] >= 0:
                for c in (tree.left[i], tree.right[i]):
                    reach.add(int(c))
                    stack.append(int(c))
        assert reach == set(range(tree.n_nodes))


def test_votes_sum_to_tree_count_and_argmax(small_forest):
    X = separable(60, 4).X
    votes = small_forest.votes(X)
    assert np.all(votes.sum(axis=1) == small_forest.n_trees)
    pred = small_forest.predict(X)
    for v, p in zip(votes, pred):
        i = BASE_KINDS.index(K(p))
        assert v[i] == v.max() and np.all(v[:i] < v[i])


def test_predict3_reports_votes(small_forest):
    fv = FeatureVector(separable(3, 8).X[0])
    kind, votes = predict3(small_forest, fv)
    assert sum(votes) == 25
    assert kind is K(int(votes_to_kind(np.array([votes]))[0]))


@pytest.mark.parametrize("votes,kind", [((70, 20, 10), K.TYPING), ((50, 50, 0), K.TYPING), ((0, 40, 40), K.SCROLLING)])
def test_vote_tie_break(votes, kind):
    assert votes_to_kind(np.array([votes]))[0] == kind


def test_class_weights_balance():
    y = np.array([0] * 6 + [1] * 3 + [2] * 1)
    w = class_weights_for(y)
    assert w[K.TYPING] == pytest.approx(10 / (3 * 6))
    assert w[K.SCROLLING] == pytest.approx(10 / (3 * 3))
    assert w[K.MKKM] == pytest.approx(10 / 3)
    for k, n in ((K.TYPING, 6), (K.SCROLLING, 3), (K.MKKM, 1)):
        assert w[k] * n == pytest.approx(10 / 3)


def test_sparse_rows_are_not_trained_on():
    data = separable(90, 5)
    sparse = np.zeros(90, bool)
    sparse[data.y == int(K.MKKM)] = True
    forest = train_forest(TrainingSet(data.X, data.y, data.users, sparse), seed=0, n_trees=5)
    assert forest.classes == (K.TYPING, K.SCROLLING)


def test_model_file_roundtrip_is_bit_identical(small_forest):
    X = separable(100, 6).X
    forest, vt = loads_model(dumps_model(small_forest))
    assert vt is None
    assert np.array_equal(forest.votes(X), small_forest.votes(X))
    assert dumps_model(forest) == dumps_model(small_forest)


def test_louo_excludes_held_user():
    data = separable(240, 7, users=4)
    models = leave_one_user_out(data, seed=0, n_trees=5)
    assert [u for u, _ in models] == ["u00", "u01", "u02", "u03"]
    two = leave_one_user_out(separable(60, 7, users=2), seed=0, n_trees=5)
    assert len(two) == 2


def test_louo_exclusion_is_real(monkeypatch):
    import zlab.classifier as clf

    seen = []
    real = clf.train_forest

    def spy(data, seed, **kw):
        seen.append(set(data.users.tolist()))
        return real(data, seed, **kw)

    monkeypatch.setattr(clf, "train_forest", spy)
    data = separable(120, 7, users=3)
    for (u, _), users in zip(clf.leave_one_user_out(data, 0, n_trees=3), seen):
        assert u not in users


def test_held_out_user_scores_no_better_than_seen_user():
    held, seen = [], []
    for seed in range(10):
        X, y, u = separable_rows(240, seed, separation=1.2, n_users=4)
        X = X + np.where(u == "u00", 0.7, 0.0)[:, None]  # the held user is shifted
        data = TrainingSet(X, y, u)
        mine = data.subset(data.users == "u00")
        out = train_forest(data.subset(data.users != "u00"), seed, n_trees=15)
        inc = train_forest(data, seed, n_trees=15)
        held.append(np.mean(out.predict(mine.X) == mine.y))
        seen.append(np.mean(inc.predict(mine.X) == mine.y))
    assert np.mean(held) <= np.mean(seen)


def test_vote_tree_needs_idle_and_upright(small_forest):
    data = separable(60, 3)
    with pytest.raises(InsufficientClasses):
        train_vote_tree(small_forest, data)


def test_vote_tree_routes_confusable_classes():
    # Idle rows get near-unanimous Scrolling votes and Upright rows near-unanimous
    # Typing votes; genuine rows sit at the opposite, lower-margin end.
    V, y = [], []
    for i in range(40):
        V.append((0, 100 - i % 5, i % 5)); y.append(int(K.IDLE))
        V.append((100 - i % 5, i % 5, 0)); y.append(int(K.UPRIGHT))
        V.append((0, 70 + i % 10, 30 - i % 10)); y.append(int(K.SCROLLING))
        V.append((70 + i % 10, 0, 30 - i % 10)); y.append(int(K.TYPING))
        V.append((10, 10, 80)); y.append(int(K.MKKM))
    tree = fit_gain_ratio_tree(np.array(V), np.array(y))
    assert tree.predict_votes((0, 98, 2)) is K.IDLE
    assert tree.predict_votes((97, 3, 0)) is K.UPRIGHT
    assert tree.predict_votes((0, 75, 25)) is K.SCROLLING
    assert tree.predict_votes((75, 0, 25)) is K.TYPING
    assert tree.predict_votes((10, 10, 80)) is K.MKKM


def test_predict5_end_to_end_on_generated_sessions():
    cfg = PipelineConfig()
    parts = []
    for i in range(4):
        b = generate_session(UserProfile(f"u{i}", jitter_seed=i), 150_000, 40 + i, upright_epochs=1)
        parts.append(training_rows(b.events, b.sensor, b.user_id, cfg, extended=b.truth))
    train, test = TrainingSet.concat(parts[:3]), parts[3]
    forest = train_forest(train, seed=0, n_trees=40)
    vt = train_vote_tree(forest, train)
    for kind in (K.IDLE, K.TYPING):
        rows = test.X[(test.y == int(kind)) & ~test.sparse]
        got = [predict5(forest, vt, FeatureVector(x)) for x in rows]
        assert np.mean([g is kind for g in got]) >= 0.8, kind
    flat = FeatureVector(np.zeros(N_FEATURES), sparse=True)
    assert predict5(forest, vt, flat) is predict5(forest, vt, flat)
