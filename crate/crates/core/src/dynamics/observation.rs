use crate::model::{Grid, ObservationModel, Path};
use crate::{lit, Error, Real, Result};

/// Source term `g = A21^* Sigma_2 dY/du` of the observation SPDE.
///
/// Each increment `A21^* Sigma_2 (Y_{j+1} - Y_j) / h` is split evenly between
/// the two end nodes of its interval, matching the lumped trapezoidal
/// weighting of `A21^* Sigma_2 A21` in the operator. Interior nodes receive
/// the average of the adjacent increment rates, end nodes half of one. The
/// `-A21^* Sigma_2 A21 x` part of the drift lives in the operator.
pub fn drift_from_observation<T: Real>(obs: &ObservationModel<T>, y_path: &Path<T>, grid: Grid) -> Result<Path<T>> {
    obs.check_shapes()?;
    if y_path.grid() != grid {
        return Err(Error::GridMismatch(format!(
            "observation path has {} nodes, operator grid has {}",
            y_path.grid().n_nodes(),
            grid.n_nodes()
        )));
    }
    if y_path.dim() != obs.dim_y() {
        return Err(Error::DimensionMismatch {
            context: "observation path dimension",
            expected: obs.dim_y(),
            got: y_path.dim(),
        });
    }
    let h: T = grid.spacing();
    let gain = obs.a21.transpose() * obs.sigma2()?;
    let two: T = lit(2.0);
    let mut out = Path::zeros(grid, obs.dim_x());
    for j in 0..grid.n_nodes() - 1 {
        let half = &gain * (y_path.at(j + 1) - y_path.at(j)) / (two * h);
        out.set(j, &(out.at(j) + &half));
        out.set(j + 1, &half);
    }
    Ok(out)
}
