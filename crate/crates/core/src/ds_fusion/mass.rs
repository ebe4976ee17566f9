use super::FusionError;

/// Tolerance on `m_free + m_occ + m_unknown = 1`.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Dempster's rule is undefined when `1 - K` drops below this.
pub const CONFLICT_EPS: f64 = 1e-9;

/// Belief masses on {Free}, {Occupied} and the full frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassAssignment {
    m_free: f64,
    m_occ: f64,
    m_unknown: f64,
}

impl Default for MassAssignment {
    fn default() -> Self {
        Self::VACUOUS
    }
}

impl MassAssignment {
    /// Total ignorance: all mass on the frame.
    pub const VACUOUS: MassAssignment = MassAssignment {
        m_free: 0.0,
        m_occ: 0.0,
        m_unknown: 1.0,
    };

    pub fn new(m_free: f64, m_occ: f64, m_unknown: f64) -> Result<Self, FusionError> {
        let valid = [m_free, m_occ, m_unknown]
            .iter()
            .all(|m| m.is_finite() && *m >= 0.0)
            && (m_free + m_occ + m_unknown - 1.0).abs() <= MASS_TOLERANCE;
        if !valid {
            return Err(FusionError::InvalidMass {
                m_free,
                m_occ,
                m_unknown,
            });
        }
        Ok(Self {
            m_free,
            m_occ,
            m_unknown,
        })
    }

    /// Builds a mass from its two singleton components; the rest goes to
    /// the frame.
    pub fn from_evidence(m_free: f64, m_occ: f64) -> Result<Self, FusionError> {
        Self::new(m_free, m_occ, 1.0 - m_free - m_occ)
    }

    pub fn m_free(&self) -> f64 {
        self.m_free
    }

    pub fn m_occ(&self) -> f64 {
        self.m_occ
    }

    pub fn m_unknown(&self) -> f64 {
        self.m_unknown
    }

    pub fn is_vacuous(&self) -> bool {
        self.m_free == 0.0 && self.m_occ == 0.0
    }
}

/// Conflict mass K: the product mass that lands on the empty set.
pub fn conflict(m1: &MassAssignment, m2: &MassAssignment) -> f64 {
    m1.m_free * m2.m_occ + m1.m_occ * m2.m_free
}

/// Dempster's normalised conjunctive combination over {Free, Occupied}.
///
/// The expressions are written so that swapping the arguments yields the
/// same floating-point operations, making the rule exactly commutative.
pub fn ds_combine(
    m1: &MassAssignment,
    m2: &MassAssignment,
) -> Result<MassAssignment, FusionError> {
    let normalizer = 1.0 - conflict(m1, m2);
    if normalizer < CONFLICT_EPS {
        return Err(FusionError::TotalConflict { normalizer });
    }
    // F∩F, F∩Ω, Ω∩F all land on F; likewise for O. Ω∩Ω stays on Ω.
    let free = m1.m_free * m2.m_free + (m1.m_free * m2.m_unknown + m1.m_unknown * m2.m_free);
    let occ = m1.m_occ * m2.m_occ + (m1.m_occ * m2.m_unknown + m1.m_unknown * m2.m_occ);
    let unknown = m1.m_unknown * m2.m_unknown;
    Ok(MassAssignment {
        m_free: free / normalizer,
        m_occ: occ / normalizer,
        m_unknown: unknown / normalizer,
    })
}

/// Discounts the singleton masses by `factor`, moving the rest to ignorance.
pub fn decay(m: &MassAssignment, factor: f64) -> MassAssignment {
    if factor == 1.0 {
        return *m;
    }
    let factor = factor.clamp(0.0, 1.0);
    let m_free = factor * m.m_free;
    let m_occ = factor * m.m_occ;
    MassAssignment {
        m_free,
        m_occ,
        m_unknown: 1.0 - (m_free + m_occ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(f: f64, o: f64, u: f64) -> MassAssignment {
        MassAssignment::new(f, o, u).unwrap()
    }

    #[test]
    fn construction() {
        assert!(m(0.0, 0.0, 1.0).is_vacuous());
        let a = m(0.3, 0.5, 0.2);
        assert_eq!((a.m_free(), a.m_occ(), a.m_unknown()), (0.3, 0.5, 0.2));
        assert!(matches!(
            MassAssignment::new(0.6, 0.6, 0.0),
            Err(FusionError::InvalidMass { .. })
        ));
        assert!(MassAssignment::new(-0.1, 0.6, 0.5).is_err());
        assert!(MassAssignment::new(f64::NAN, 0.0, 1.0).is_err());
    }

    #[test]
    fn combine_worked_example() {
        let r = ds_combine(&m(0.6, 0.0, 0.4), &m(0.5, 0.3, 0.2)).unwrap();
        // (0.3 + 0.12 + 0.2) / 0.82, (0.12) / 0.82, (0.08) / 0.82
        assert!((r.m_free() - 0.7561).abs() < 1e-3);
        assert!((r.m_occ() - 0.1463).abs() < 1e-3);
        assert!((r.m_unknown() - 0.0976).abs() < 1e-3);
        assert!((conflict(&m(0.6, 0.0, 0.4), &m(0.5, 0.3, 0.2)) - 0.18).abs() < 1e-12);
    }

    #[test]
    fn vacuous_is_identity() {
        let x = m(0.25, 0.35, 0.4);
        assert_eq!(ds_combine(&MassAssignment::VACUOUS, &x).unwrap(), x);
        assert_eq!(ds_combine(&x, &MassAssignment::VACUOUS).unwrap(), x);
        assert_eq!(conflict(&MassAssignment::VACUOUS, &x), 0.0);
    }

    #[test]
    fn total_conflict() {
        let free = m(1.0, 0.0, 0.0);
        let occ = m(0.0, 1.0, 0.0);
        assert_eq!(conflict(&free, &occ), 1.0);
        assert!(matches!(
            ds_combine(&free, &occ),
            Err(FusionError::TotalConflict { .. })
        ));
    }

    #[test]
    fn decay_cases() {
        let x = m(0.8, 0.1, 0.1);
        assert_eq!(decay(&x, 1.0), x);
        assert_eq!(decay(&x, 0.0), MassAssignment::VACUOUS);
        let d = decay(&x, 0.5);
        assert!((d.m_free() - 0.4).abs() < 1e-15);
        assert!((d.m_occ() - 0.05).abs() < 1e-15);
        assert!((d.m_unknown() - 0.55).abs() < 1e-15);
    }
}
