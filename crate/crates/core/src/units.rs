//! Decibel helpers.

#[inline]
pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

#[inline]
pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// Rounds to 4 decimals, the precision used in every exported file.
#[inline]
pub fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

/// Serde helpers writing dB values at export precision.
pub(crate) mod fixed4 {
    use serde::Serializer;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(super::round4(*v))
    }

    pub mod option {
        use serde::Serializer;

        pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
            match v {
                Some(x) => s.serialize_some(&super::super::round4(*x)),
                None => s.serialize_none(),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions() {
        assert_eq!(dbm_to_mw(0.0), 1.0);
        assert!((dbm_to_mw(-30.0) - 1e-3).abs() < 1e-18);
        assert!((mw_to_dbm(100.0) - 20.0).abs() < 1e-12);
        assert_eq!(round4(1.234_56), 1.2346);
    }
}
