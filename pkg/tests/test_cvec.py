import numpy as np
import pytest

from linkqa import cvec

from oracles import scalar_complex_score


def random_packed(rng, h, shape=()):
    return rng.normal(size=shape + (2 * h,))


class TestScore:
    def test_all_ones_real(self):
        v = np.array([1.0, 1.0, 0.0, 0.0])  # (1+0i, 1+0i)
        assert cvec.score(v, v, v) == pytest.approx(2.0)

    def test_conjugation_of_third_slot(self):
        # h=1: s = i, r = i, o = -1 + 0i  ->  Re(i * i * conj(-1)) = 1
        s = np.array([0.0, 1.0])
        r = np.array([0.0, 1.0])
        o = np.array([-1.0, 0.0])
        assert cvec.score(s, r, o) == pytest.approx(1.0)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            cvec.score(np.zeros(4), np.zeros(4), np.zeros(6))

    @pytest.mark.parametrize("h", [1, 4, 8])
    def test_matches_scalar_loop(self, h):
        rng = np.random.default_rng(h)
        for _ in range(25):
            s, r, o = (random_packed(rng, h) for _ in range(3))
            assert cvec.score(s, r, o) == pytest.approx(
                scalar_complex_score(s.tolist(), r.tolist(), o.tolist())
            )

    def test_batched_matches_rowwise(self):
        rng = np.random.default_rng(3)
        s, r, o = (random_packed(rng, 5, (7,)) for _ in range(3))
        batched = cvec.score(s, r, o)
        for i in range(7):
            assert batched[i] == pytest.approx(float(cvec.score(s[i], r[i], o[i])))

    def test_conjugate_symmetry(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            s, r, o = (random_packed(rng, 6) for _ in range(3))
            lhs = cvec.score(s, r, o)
            rhs = cvec.score(o, cvec.conj(r), s)
            assert abs(lhs - rhs) <= 1e-9 * max(1.0, abs(lhs))

    def test_real_scaling_linearity(self):
        rng = np.random.default_rng(5)
        s, r, o = (random_packed(rng, 6) for _ in range(3))
        alpha = 2.75
        assert cvec.score(alpha * s, r, o) == pytest.approx(alpha * cvec.score(s, r, o))


class TestGrads:
    def test_match_finite_differences(self):
        rng = np.random.default_rng(6)
        h, eps = 4, 1e-6
        s, r, o = (random_packed(rng, h) for _ in range(3))
        ds, dr, do = cvec.score_grads(s, r, o)
        for vec, grad in ((s, ds), (r, dr), (o, do)):
            for i in range(2 * h):
                bumped_p, bumped_m = vec.copy(), vec.copy()
                bumped_p[i] += eps
                bumped_m[i] -= eps
                args_p = [bumped_p if v is vec else v for v in (s, r, o)]
                args_m = [bumped_m if v is vec else v for v in (s, r, o)]
                fd = (cvec.score(*args_p) - cvec.score(*args_m)) / (2 * eps)
                assert grad[i] == pytest.approx(fd, rel=1e-6, abs=1e-8)


class TestTableScoring:
    def test_matches_per_row_score(self):
        rng = np.random.default_rng(7)
        h = 5
        s = random_packed(rng, h)
        r = random_packed(rng, h)
        table = random_packed(rng, h, (11,))
        scores = cvec.score_against_table(cvec.cmul(s, r), table)
        for i in range(11):
            assert scores[i] == pytest.approx(float(cvec.score(s, r, table[i])))


class TestCmul:
    def test_matches_complex_arithmetic(self):
        rng = np.random.default_rng(8)
        h = 3
        a, b = random_packed(rng, h), random_packed(rng, h)
        got = cvec.cmul(a, b)
        za = a[:h] + 1j * a[h:]
        zb = b[:h] + 1j * b[h:]
        zc = za * zb
        np.testing.assert_allclose(got[:h], zc.real)
        np.testing.assert_allclose(got[h:], zc.imag)
