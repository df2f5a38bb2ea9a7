"""Loss objectives against exhaustive brute-force oracles and closed forms."""

import numpy as np
import pytest

from scenematch.losses import (
    BatchEmbeddings,
    contrastive,
    specificity,
    total_loss,
    triplet_hardest,
)
from scenematch.numcore import grad_check, parameter
from scenematch.numcore.functions import cosine_sim


# ------------------------------------------------------------------ oracles


def triplet_oracle(v, t, margin):
    n = len(v)
    total = 0.0
    for i in range(n):
        pos = cosine_sim(v[i], t[i])
        hardest_c = max(cosine_sim(v[i], t[j]) for j in range(n) if j != i)
        hardest_i = max(cosine_sim(v[j], t[i]) for j in range(n) if j != i)
        total += max(0.0, margin + hardest_c - pos)
        total += max(0.0, margin + hardest_i - pos)
    return total


def contrastive_oracle(v, t, ents, tau):
    n = len(v)
    units = []
    for i in range(n):
        units.append((i, t[i]))
        for e in ents[i]:
            units.append((i, e))
    total = 0.0
    for i in range(n):
        for owner, u in units:
            if owner != i:
                continue
            x = np.exp(cosine_sim(v[i], u) / tau)
            den_units = x + sum(
                np.exp(cosine_sim(v[i], u2) / tau) for o2, u2 in units if o2 != i
            )
            den_images = sum(np.exp(cosine_sim(v[j], u) / tau) for j in range(n))
            total += np.log(x / den_units) + np.log(x / den_images)
    return -total


def specificity_oracle(v, t, ents, margin):
    total = 0.0
    for i in range(len(v)):
        pos = cosine_sim(v[i], t[i])
        for e in ents[i]:
            total += max(0.0, margin + cosine_sim(v[i], e) - pos)
    return total


def random_batch(rng, n, dim=6, max_entities=4, **kw) -> BatchEmbeddings:
    ents = [
        [rng.normal(size=dim) for _ in range(rng.integers(0, max_entities + 1))]
        for _ in range(n)
    ]
    return BatchEmbeddings(
        images=rng.normal(size=(n, dim)),
        captions=rng.normal(size=(n, dim)),
        entities=ents,
        **kw,
    )


# ------------------------------------------------------------------ triplet


class TestTripletHardest:
    def test_identical_embeddings(self):
        x = np.tile(np.array([1.0, 2.0, 3.0]), (2, 1))
        b = BatchEmbeddings(images=x, captions=x.copy(), margin=0.4)
        assert float(triplet_hardest(b)) == pytest.approx(1.6)

    def test_perfectly_separated(self):
        x = np.array([[1.0, 0.0], [-1.0, 0.0]])
        b = BatchEmbeddings(images=x, captions=x.copy(), margin=0.4)
        assert float(triplet_hardest(b)) == pytest.approx(0.0)

    def test_matches_bruteforce_n5(self):
        rng = np.random.default_rng(0)
        b = random_batch(rng, 5, margin=0.4)
        want = triplet_oracle(b.images.data, b.captions.data, 0.4)
        assert float(triplet_hardest(b)) == pytest.approx(want, abs=1e-12)

    def test_needs_two(self):
        b = BatchEmbeddings(images=np.ones((1, 3)), captions=np.ones((1, 3)))
        with pytest.raises(ValueError):
            triplet_hardest(b)

    def test_monotone_in_positive_similarity(self):
        # rotate t_0 toward v_0 in a subspace invisible to every other pair
        n, dim = 3, 8
        v = np.eye(n, dim)
        losses = []
        for theta in np.linspace(1.2, 0.1, 12):
            t = np.eye(n, dim, k=3)  # captions live in a disjoint block
            t[0] = np.cos(theta) * v[0] + np.sin(theta) * np.eye(1, dim, k=7)[0]
            b = BatchEmbeddings(images=v, captions=t, margin=0.4)
            losses.append(float(triplet_hardest(b)))
        assert all(a >= b_ - 1e-12 for a, b_ in zip(losses, losses[1:]))


# ------------------------------------------------------------------ contrastive


class TestContrastive:
    def test_single_pair_no_entities_is_zero(self):
        b = BatchEmbeddings(
            images=np.array([[1.0, 2.0]]), captions=np.array([[0.5, -1.0]]), temperature=1.0
        )
        assert float(contrastive(b)) == pytest.approx(0.0, abs=1e-12)

    def test_two_orthogonal_pairs_closed_form(self):
        x = np.array([[1.0, 0.0], [0.0, 1.0]])
        b = BatchEmbeddings(images=x, captions=x.copy(), temperature=1.0)
        want = 4.0 * np.log(1.0 + np.exp(-1.0))  # = 1.2530...
        assert float(contrastive(b)) == pytest.approx(want, abs=1e-12)
        assert float(contrastive(b)) == pytest.approx(1.2530, abs=1e-4)

    def test_matches_bruteforce_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            b = random_batch(rng, 4, max_entities=3, temperature=1.0)
            want = contrastive_oracle(
                b.images.data, b.captions.data, [[e.data for e in es] for es in b.entities], 1.0
            )
            assert float(contrastive(b)) == pytest.approx(want, abs=1e-12)

    def test_small_temperature_stable(self):
        rng = np.random.default_rng(2)
        b = random_batch(rng, 4, max_entities=2, temperature=0.01)
        got = float(contrastive(b))
        want = contrastive_oracle(
            b.images.data, b.captions.data, [[e.data for e in es] for es in b.entities], 0.01
        )
        assert np.isfinite(got)
        assert got == pytest.approx(want, rel=1e-12)

    def test_temperature_validation(self):
        with pytest.raises(ValueError):
            BatchEmbeddings(images=np.ones((2, 3)), captions=np.ones((2, 3)), temperature=0.0)


# ------------------------------------------------------------------ specificity


class TestSpecificity:
    def test_identical_everything_is_margin_per_entity(self):
        x = np.array([1.0, -1.0, 2.0])
        k = 3
        b = BatchEmbeddings(
            images=x[None, :].repeat(2, axis=0),
            captions=x[None, :].repeat(2, axis=0),
            entities=[[x.copy() for _ in range(k)], [x.copy() for _ in range(k)]],
            margin=0.4,
        )
        assert float(specificity(b)) == pytest.approx(0.4 * k * 2, abs=1e-12)

    def test_inactive_hinge(self):
        v = np.array([[1.0, 0.0]])
        t = np.array([[1.0, 0.0]])           # s(v, t) = 1
        e = np.array([np.cos(1.2), np.sin(1.2)])  # s(v, e) ~ 0.36 <= 1 - 0.4
        b = BatchEmbeddings(images=v, captions=t, entities=[[e]], margin=0.4)
        assert float(specificity(b)) == pytest.approx(0.0, abs=1e-12)

    def test_matches_bruteforce(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            b = random_batch(rng, 4, max_entities=4, margin=0.4)
            want = specificity_oracle(
                b.images.data, b.captions.data, [[e.data for e in es] for es in b.entities], 0.4
            )
            assert float(specificity(b)) == pytest.approx(want, abs=1e-12)

    def test_no_entities_zero(self):
        b = BatchEmbeddings(images=np.ones((2, 3)), captions=np.ones((2, 3)))
        assert float(specificity(b)) == 0.0


# ------------------------------------------------------------------ total


class TestTotalLoss:
    def test_degenerate_weights_equal_triplet(self):
        rng = np.random.default_rng(4)
        b = random_batch(rng, 4, contrastive_weight=0.0, specificity_weight=0.0)
        assert float(total_loss(b)) == pytest.approx(float(triplet_hardest(b)), abs=1e-12)

    def test_default_weights(self):
        b = BatchEmbeddings(images=np.ones((2, 3)), captions=np.ones((2, 3)))
        assert b.contrastive_weight == 0.25
        assert b.specificity_weight == 3.0
        assert b.margin == 0.4
        assert b.temperature == 0.01

    def test_weighted_sum_arithmetic(self):
        # components (1.0, 2.0, 0.5) with default weights -> 1 + 0.5 + 1.5 = 3
        assert 1.0 + 0.25 * 2.0 + 3.0 * 0.5 == pytest.approx(3.0)
        rng = np.random.default_rng(5)
        b = random_batch(rng, 3)
        want = (
            float(triplet_hardest(b))
            + 0.25 * float(contrastive(b))
            + 3.0 * float(specificity(b))
        )
        assert float(total_loss(b)) == pytest.approx(want, rel=1e-12)


# ------------------------------------------------------------------ properties


class TestLossProperties:
    def test_oracle_equivalence_many_batches(self):
        rng = np.random.default_rng(6)
        for _ in range(40):
            n = int(rng.integers(2, 9))
            b = random_batch(rng, n, max_entities=4, temperature=1.0, margin=0.4)
            ents = [[e.data for e in es] for es in b.entities]
            assert float(triplet_hardest(b)) == pytest.approx(
                triplet_oracle(b.images.data, b.captions.data, 0.4), abs=1e-12
            )
            assert float(contrastive(b)) == pytest.approx(
                contrastive_oracle(b.images.data, b.captions.data, ents, 1.0), abs=1e-12
            )
            assert float(specificity(b)) == pytest.approx(
                specificity_oracle(b.images.data, b.captions.data, ents, 0.4), abs=1e-12
            )

    def test_losses_nonnegative(self):
        rng = np.random.default_rng(7)
        for _ in range(30):
            b = random_batch(rng, int(rng.integers(2, 6)))
            assert float(triplet_hardest(b)) >= 0.0
            assert float(contrastive(b)) >= -1e-10
            assert float(specificity(b)) >= 0.0

    def test_scale_invariance(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            b = random_batch(rng, 4, max_entities=2)
            scales_v = rng.uniform(0.1, 10.0, size=(4, 1))
            scales_t = rng.uniform(0.1, 10.0, size=(4, 1))
            b2 = BatchEmbeddings(
                images=b.images.data * scales_v,
                captions=b.captions.data * scales_t,
                entities=[
                    [e.data * rng.uniform(0.1, 10.0) for e in es] for es in b.entities
                ],
                margin=b.margin,
                temperature=b.temperature,
            )
            for fn in (triplet_hardest, contrastive, specificity, total_loss):
                assert float(fn(b)) == pytest.approx(float(fn(b2)), abs=1e-10)

    def test_batch_permutation_invariance(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            n = int(rng.integers(2, 7))
            b = random_batch(rng, n, max_entities=3)
            perm = rng.permutation(n)
            b2 = BatchEmbeddings(
                images=b.images.data[perm],
                captions=b.captions.data[perm],
                entities=[[e.data for e in b.entities[i]] for i in perm],
                margin=b.margin,
                temperature=b.temperature,
            )
            for fn in (triplet_hardest, contrastive, specificity, total_loss):
                assert float(fn(b)) == pytest.approx(float(fn(b2)), abs=1e-12)


# ------------------------------------------------------------------ gradients


class _LossParams:
    """Embeddings as named parameters for finite-difference checking."""

    def __init__(self, rng, n, dim, ents_per_caption):
        self.images = parameter(rng.normal(size=(n, dim)))
        self.captions = parameter(rng.normal(size=(n, dim)))
        self.entities = [
            [parameter(rng.normal(size=dim)) for _ in range(k)] for k in ents_per_caption
        ]

    def batch(self, **kw):
        return BatchEmbeddings(
            images=self.images, captions=self.captions, entities=self.entities, **kw
        )

    def named_parameters(self):
        out = [("images", self.images), ("captions", self.captions)]
        for i, es in enumerate(self.entities):
            out += [(f"ent.{i}.{j}", e) for j, e in enumerate(es)]
        return out


def _margin_gaps(b):
    """Distance of every hinge / argmax decision from its breakpoint."""
    v = b.images.data / np.linalg.norm(b.images.data, axis=1, keepdims=True)
    t = b.captions.data / np.linalg.norm(b.captions.data, axis=1, keepdims=True)
    s = v @ t.T
    n = len(s)
    gaps = []
    for i in range(n):
        row = np.delete(s[i], i)
        col = np.delete(s[:, i], i)
        gaps.append(abs(b.margin + row.max() - s[i, i]))       # hinge distance
        gaps.append(abs(b.margin + col.max() - s[i, i]))
        if len(row) > 1:
            top2 = np.sort(row)[-2:]
            gaps.append(top2[1] - top2[0])                     # argmax tie gap
            top2c = np.sort(col)[-2:]
            gaps.append(top2c[1] - top2c[0])
    return min(gaps)


class TestLossGradients:
    def test_total_loss_grad_check(self):
        rng = np.random.default_rng(12)
        p = _LossParams(rng, n=3, dim=5, ents_per_caption=[1, 2, 0])
        b = p.batch(temperature=0.5, margin=0.4)
        assert _margin_gaps(b) > 1e-3  # away from kinks and ties by construction

        def loss(params):
            return total_loss(params.batch(temperature=0.5, margin=0.4))

        assert grad_check(loss, p, eps=1e-5) < 1e-4

    def test_each_loss_grad_check(self):
        rng = np.random.default_rng(23)
        p = _LossParams(rng, n=3, dim=5, ents_per_caption=[2, 1, 1])
        b = p.batch(temperature=0.5, margin=0.35)
        assert _margin_gaps(b) > 1e-3
        for fn in (triplet_hardest, contrastive, specificity):
            def loss(params, fn=fn):
                return fn(params.batch(temperature=0.5, margin=0.35))

            assert grad_check(loss, p, eps=1e-5) < 1e-4
