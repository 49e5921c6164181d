use super::network::Params;
use super::real::Real;
use super::DetectorError;

/// Classic momentum SGD: `v <- momentum * v - lr * g; w <- w + v`.
///
/// `velocity` starts as zeros shaped like the parameters.
pub fn sgd_step<T: Real>(
    params: &mut Params<T>,
    grads: &Params<T>,
    velocity: &mut Params<T>,
    learning_rate: f64,
    momentum: f64,
) -> Result<(), DetectorError> {
    if !params.same_shape(grads) || !params.same_shape(velocity) {
        return Err(DetectorError::ParamShape);
    }
    let lr = T::from_f64_lossy(learning_rate);
    let mu = T::from_f64_lossy(momentum);
    for ((w, g), v) in params
        .tensors_mut()
        .iter_mut()
        .zip(grads.tensors())
        .zip(velocity.tensors_mut())
    {
        for ((wi, gi), vi) in w.iter_mut().zip(g).zip(v.iter_mut()) {
            *vi = mu * *vi - lr * *gi;
            *wi += *vi;
        }
    }
    Ok(())
}
