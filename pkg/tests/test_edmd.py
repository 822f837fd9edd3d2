import math

import numpy as np
import pytest

from mvkoopman.core import PairDataSet
from mvkoopman.dictionary import Dictionary, indicator_1d, monomial
from mvkoopman.edmd import (SingularGramError, eval_eigenfunction, gram_matrix, koopman_matrix,
                            perron_matrix, run_edmd, shift_augment, spectrum, structure_matrix)


class Constant(Dictionary):
    def __init__(self):
        super().__init__(size=1, dim=1)

    def _evaluate(self, X):
        return np.ones((X.shape[0], 1))


def _swap():
    return PairDataSet([[0.25], [0.75]], [[0.75], [0.25]], 1.0)


class TestGram:
    def test_constant(self):
        assert gram_matrix(Constant(), np.random.default_rng(0).standard_normal((9, 1))).tolist() == [[1.0]]

    def test_two_bins(self):
        np.testing.assert_array_equal(gram_matrix(indicator_1d(0, 1, 2), [[0.25], [0.75]]),
                                      np.diag([0.5, 0.5]))

    def test_monomial(self):
        G = gram_matrix(monomial(1, 1), [[-1.0], [1.0]])
        np.testing.assert_array_equal(G, np.eye(2))

    def test_symmetric_exactly(self):
        x = np.random.default_rng(1).standard_normal((10_000, 1))
        G = gram_matrix(monomial(1, 5), x)
        assert np.array_equal(G, G.T)


class TestStructure:
    def test_identity_data(self):
        x = np.random.default_rng(0).uniform(0, 1, (50, 1))
        d = indicator_1d(0, 1, 5)
        np.testing.assert_array_equal(structure_matrix(d, PairDataSet(x, x, 1.0)), gram_matrix(d, x))

    def test_single_pair(self):
        C = structure_matrix(indicator_1d(0, 1, 2), PairDataSet([[0.25]], [[0.75]], 1.0))
        assert C.tolist() == [[0.0, 0.0], [1.0, 0.0]]

    def test_swap(self):
        C = structure_matrix(indicator_1d(0, 1, 2), _swap())
        assert C.tolist() == [[0.0, 0.5], [0.5, 0.0]]


class TestSolves:
    def test_identity_gram(self):
        C = np.random.default_rng(0).standard_normal((4, 4))
        np.testing.assert_allclose(koopman_matrix(np.eye(4), C), C.T)
        np.testing.assert_allclose(perron_matrix(np.eye(4), C), C)

    def test_swap_is_permutation(self):
        K = koopman_matrix(np.diag([0.5, 0.5]), np.array([[0, 0.5], [0.5, 0]]))
        np.testing.assert_allclose(K.T, [[0, 1], [1, 0]], atol=1e-15)

    def test_identity_data(self):
        x = np.random.default_rng(0).uniform(0, 1, (50, 1))
        res = run_edmd(indicator_1d(0, 1, 5), PairDataSet(x, x, 1.0))
        np.testing.assert_allclose(res.matrices.K, np.eye(5), atol=1e-14)
        np.testing.assert_allclose(res.matrices.P, np.eye(5), atol=1e-14)
        np.testing.assert_allclose(res.koopman.eigenvalues, np.ones(5))

    def test_singular(self):
        G = np.array([[1.0, 1.0], [1.0, 1.0]])
        with pytest.raises(SingularGramError, match="set reg > 0"):
            koopman_matrix(G, np.eye(2))
        K = koopman_matrix(G, np.eye(2), reg=1e-3)
        assert np.isfinite(K).all()

    def test_ridge_changes_result(self):
        G = np.diag([0.5, 0.5])
        C = np.array([[0, 0.5], [0.5, 0]])
        assert not np.allclose(koopman_matrix(G, C, reg=0.1), koopman_matrix(G, C))


class TestSpectrum:
    def test_identity(self):
        np.testing.assert_array_equal(spectrum(np.eye(3), 2).eigenvalues, [1, 1])

    def test_diagonal(self):
        np.testing.assert_allclose(spectrum(np.diag([0.1, 0.9, 0.5]), 2).eigenvalues, [0.9, 0.5])

    def test_rotation(self):
        s = spectrum(np.array([[0.0, -1.0], [1.0, 0.0]]))
        lam = s.eigenvalues
        np.testing.assert_allclose(np.abs(lam), 1.0)
        np.testing.assert_allclose(sorted(lam.imag), [-1, 1])
        assert lam[0] == pytest.approx(np.conj(lam[1]))
        np.testing.assert_allclose(s.eigenvectors[:, 0], np.conj(s.eigenvectors[:, 1]))

    def test_residuals_small(self):
        A = np.random.default_rng(0).standard_normal((30, 30))
        assert spectrum(A).residuals.max() <= 1e-8

    def test_n_eig_bounds(self):
        with pytest.raises(ValueError):
            spectrum(np.eye(2), 3)


class TestEigenfunction:
    def test_constant(self):
        xs = np.linspace(-3, 3, 7)
        np.testing.assert_array_equal(eval_eigenfunction(monomial(1, 1), np.array([1.0, 0.0]), xs),
                                      np.ones(7))

    def test_identity(self):
        xs = np.linspace(-3, 3, 7)
        np.testing.assert_array_equal(eval_eigenfunction(monomial(1, 2), np.array([0.0, 1.0, 0.0]), xs), xs)

    def test_swap_eigenvector(self):
        res = run_edmd(indicator_1d(0, 1, 2), _swap())
        lam = res.koopman.eigenvalues
        j = int(np.argmin(np.abs(lam + 1)))
        assert lam[j] == pytest.approx(-1.0)
        f = eval_eigenfunction(res.dictionary, res.koopman.eigenvectors[:, j], [[0.2], [0.8]])
        c = 1 / math.sqrt(2)
        np.testing.assert_allclose(f, [c, -c], atol=1e-14)

    def test_interpolation(self):
        d = indicator_1d(0, 1, 2)
        f = eval_eigenfunction(d, np.array([0.0, 1.0]), [[0.5]], interpolate=True)
        assert f[0] == pytest.approx(0.5)


def test_empty_bins_dropped(caplog):
    x = np.array([[0.1], [0.2], [0.9]])
    res = run_edmd(indicator_1d(0, 1, 4), PairDataSet(x, x, 1.0))
    assert res.kept.tolist() == [0, 3]
    assert res.dictionary.size == 2
    assert "dropping 2" in caplog.text


def test_shift_augment_wraps():
    data = PairDataSet([[0.5]], [[4.0]], 1.0)
    aug = shift_augment(data, math.pi, 2 * math.pi)
    assert aug.count == 2
    assert aug.xi[1, 0] == pytest.approx(0.5 + math.pi)
    assert aug.x_T[1, 0] == pytest.approx(4.0 + math.pi - 2 * math.pi)


def test_json_fields():
    res = run_edmd(indicator_1d(0, 1, 2), _swap(), n_eig=2)
    js = res.koopman.to_json(res.matrices.cond_G, 2, 2)
    assert set(js) >= {"eigenvalues", "residuals", "cond_G", "N", "M", "operator"}
