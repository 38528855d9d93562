//! Nonlinear least squares and the model fits built on it.

pub mod lsq;
pub mod peak;
pub mod sine;
pub mod state;

pub use lsq::{least_squares, Bound, FitResult, LeastSquaresProblem, LmOptions};
pub use peak::{fit_coincidence_peak, fit_gaussian_peak, fit_peak_with_shape, gaussian_area, GaussianFit, PeakFit, PeakFitParams, PeakShape};
pub use sine::{fit_sine, ScanPoint, SineFit, SineParams};
pub use state::{fit_state, StateCurve, StateFit};
