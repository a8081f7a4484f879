//! Classical fixed-step fourth-order Runge–Kutta.

/// A state that can be advanced along a derivative of the same shape.
pub trait OdeState: Clone {
    /// `self + h * rate`
    fn add_scaled(&self, h: f64, rate: &Self) -> Self;

    fn is_finite(&self) -> bool;
}

/// One RK4 step of size `h` from time `t`.
pub fn rk4_step<S, F>(state: &S, t: f64, h: f64, mut rhs: F) -> S
where
    S: OdeState,
    F: FnMut(f64, &S) -> S,
{
    let half = 0.5 * h;
    let k1 = rhs(t, state);
    let k2 = rhs(t + half, &state.add_scaled(half, &k1));
    let k3 = rhs(t + half, &state.add_scaled(half, &k2));
    let k4 = rhs(t + h, &state.add_scaled(h, &k3));
    state
        .add_scaled(h / 6.0, &k1)
        .add_scaled(h / 3.0, &k2)
        .add_scaled(h / 3.0, &k3)
        .add_scaled(h / 6.0, &k4)
}

impl OdeState for f64 {
    fn add_scaled(&self, h: f64, rate: &Self) -> Self {
        self + h * rate
    }

    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
}

impl<const D: usize> OdeState for nalgebra::SVector<f64, D> {
    fn add_scaled(&self, h: f64, rate: &Self) -> Self {
        self + rate * h
    }

    fn is_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }
}

impl<S: OdeState> OdeState for Vec<S> {
    fn add_scaled(&self, h: f64, rate: &Self) -> Self {
        self.iter().zip(rate).map(|(s, r)| s.add_scaled(h, r)).collect()
    }

    fn is_finite(&self) -> bool {
        self.iter().all(OdeState::is_finite)
    }
}
