use super::FieldParams;
use crate::error::{Error, Result};

/// `θ_teacher ← m·θ_teacher + (1 − m)·θ_student` for every parameter.
///
/// `m = 1` leaves the teacher untouched and `m = 0` copies the student, both
/// bit-exactly.
pub fn ema_update(teacher: &mut FieldParams, student: &FieldParams, momentum: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&momentum) {
        return Err(Error::invalid(format!("EMA momentum must be in [0,1], got {momentum}")));
    }
    teacher.check_same_architecture(student)?;
    if momentum == 1.0 {
        return Ok(());
    }
    if momentum == 0.0 {
        *teacher.store_mut() = student.store().clone();
        return Ok(());
    }
    let rest = 1.0 - momentum;
    for ((_, t), (_, s)) in teacher.store_mut().iter_mut().zip(student.store().iter()) {
        for (tv, sv) in t.values_mut().iter_mut().zip(s.values()) {
            *tv = momentum * *tv + rest * sv;
        }
    }
    Ok(())
}
