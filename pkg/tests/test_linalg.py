import numpy as np
import pytest

from app.services.linalg import cholesky_pivots, positive_definite_mask, solve_first_column


@pytest.mark.unit
class TestLinalg:
    """小さな行列の束に対する判定と求解"""

    def test_pivots_of_positive_definite_matrix(self):
        assert cholesky_pivots(np.array([[4.0, 2.0], [2.0, 2.0]])) == pytest.approx([4.0, 1.0])

    def test_positive_definite_mask(self):
        batch = np.array(
            [
                [[2.0, 0.0], [0.0, 1.0]],
                [[1.0, 1.0], [1.0, 1.0]],
                [[0.0, 0.0], [0.0, 0.0]],
            ]
        )
        assert positive_definite_mask(batch, 1e-10).tolist() == [True, False, False]

    def test_singular_member_gets_zero_pivots(self):
        batch = np.array([[[4.0, 2.0], [2.0, 2.0]], [[1.0, 1.0], [1.0, 1.0]]])
        pivots = cholesky_pivots(batch)
        assert pivots[0] == pytest.approx([4.0, 1.0])
        assert pivots[1].tolist() == [0.0, 0.0]

    def test_solve_first_column(self):
        batch = np.array([[[4.0, 2.0], [2.0, 2.0]], [[1.0, 1.0], [1.0, 1.0]]])
        out = solve_first_column(batch, np.array([True, False]))
        assert out[0] == pytest.approx(np.linalg.solve(batch[0], [1.0, 0.0]))
        assert out[1].tolist() == [0.0, 0.0]
