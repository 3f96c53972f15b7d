//! Nomographic function pairs for over-the-air computation and the stream
//! selectors that partition computing users across function streams.
//!
//! A nomographic function decomposes as `f(s) = phi(sum_k psi_k(s_k))`:
//! users apply `psi` before transmitting, the channel performs the sum, the
//! receiver applies `phi`. Two canonical pairs are provided, the arithmetic
//! sum (identity pair) and the product (base-2 log and exponential pair).

use num_complex::Complex64;

use crate::model::UserRole;
use crate::{CVector, IccError};

/// Function pair selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NomographicKind {
    /// psi = identity, phi = identity.
    Sum,
    /// psi = log2 (principal branch), phi = 2^x. Defined for nonzero inputs;
    /// meaningful round trips need positive reals.
    Product,
}

/// Membership of one function stream: which of the K users contribute.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamSelector {
    /// Per-user membership flags, length K.
    pub p: Vec<bool>,
    /// 1-based stream index this selector realizes.
    pub stream_index: usize,
}

impl StreamSelector {
    /// Complex 0/1 vector for use in linear algebra.
    pub fn indicator(&self) -> CVector {
        CVector::from_iterator(
            self.p.len(),
            self.p
                .iter()
                .map(|&sel| if sel { Complex64::ONE } else { Complex64::ZERO }),
        )
    }

    /// Number of contributing users.
    pub fn count(&self) -> usize {
        self.p.iter().filter(|&&sel| sel).count()
    }
}

/// User-side transform `psi`.
pub fn preprocess(kind: NomographicKind, s_k: Complex64) -> Result<Complex64, IccError> {
    match kind {
        NomographicKind::Sum => Ok(s_k),
        NomographicKind::Product => {
            if s_k == Complex64::ZERO {
                return Err(IccError::Domain(
                    "product preprocessing is undefined at zero".into(),
                ));
            }
            Ok(s_k.ln() / std::f64::consts::LN_2)
        }
    }
}

/// Receiver-side transform `phi` applied to the aggregated sum.
pub fn postprocess(kind: NomographicKind, aggregate: Complex64) -> Complex64 {
    match kind {
        NomographicKind::Sum => aggregate,
        NomographicKind::Product => (aggregate * std::f64::consts::LN_2).exp(),
    }
}

/// Ground-truth function value over the users a selector picks.
///
/// Returns the value and a flag that is set when the selector is empty, in
/// which case the value is `postprocess(kind, 0)`.
pub fn evaluate_target(
    kind: NomographicKind,
    s: &CVector,
    sel: &StreamSelector,
) -> Result<(Complex64, bool), IccError> {
    if sel.p.len() != s.len() {
        return Err(IccError::Config(format!(
            "selector covers {} users but the signal vector has {}",
            sel.p.len(),
            s.len()
        )));
    }
    let mut aggregate = Complex64::ZERO;
    let mut any = false;
    for (k, &member) in sel.p.iter().enumerate() {
        if member {
            aggregate += preprocess(kind, s[k])?;
            any = true;
        }
    }
    Ok((postprocess(kind, aggregate), !any))
}

/// Build the M selectors, one per stream, from per-user roles and stream
/// assignments. Data-only users appear in no selector; every computing user
/// appears in exactly one.
pub fn make_selectors(
    roles: &[UserRole],
    stream_assignment: &[Option<usize>],
    n_streams: usize,
) -> Result<Vec<StreamSelector>, IccError> {
    if roles.len() != stream_assignment.len() {
        return Err(IccError::Config(format!(
            "roles ({}) and stream_assignment ({}) disagree on K",
            roles.len(),
            stream_assignment.len()
        )));
    }
    let k_users = roles.len();
    let mut selectors: Vec<StreamSelector> = (1..=n_streams)
        .map(|m| StreamSelector {
            p: vec![false; k_users],
            stream_index: m,
        })
        .collect();
    for (k, (role, assignment)) in roles.iter().zip(stream_assignment).enumerate() {
        match (role, assignment) {
            (UserRole::DataOnly, _) => {}
            (_, Some(m)) if *m >= 1 && *m <= n_streams => selectors[*m - 1].p[k] = true,
            (_, Some(m)) => {
                return Err(IccError::Config(format!(
                    "user {k} assigned to stream {m}, but only {n_streams} streams exist"
                )));
            }
            (_, None) => {
                return Err(IccError::Config(format!(
                    "computing user {k} has no stream assignment"
                )));
            }
        }
    }
    Ok(selectors)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
