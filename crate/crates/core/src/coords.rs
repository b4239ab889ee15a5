//! Light-cone coordinates.
//!
//! The null-plane coordinates are xi = x0 - z and eta = x0 + z, with the
//! transverse pair (x, y) unchanged. All units are scaled: lengths carry the
//! Compton factor absorbed at configuration time, so x0 is c*t in those
//! units. Planes of constant xi are the initial-data surfaces everything in
//! this library evolves along.

/// An event in lab coordinates (x0, x, y, z), x0 = c t scaled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabEvent {
    pub x0: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// An event in null-plane coordinates (xi, eta, x, y).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullEvent {
    pub xi: f64,
    pub eta: f64,
    pub x: f64,
    pub y: f64,
}

impl LabEvent {
    pub fn to_null(self) -> NullEvent {
        NullEvent {
            xi: self.x0 - self.z,
            eta: self.x0 + self.z,
            x: self.x,
            y: self.y,
        }
    }
}

impl NullEvent {
    pub fn to_lab(self) -> LabEvent {
        LabEvent {
            x0: 0.5 * (self.eta + self.xi),
            x: self.x,
            y: self.y,
            z: 0.5 * (self.eta - self.xi),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let e = LabEvent { x0: 1.25, x: -0.5, y: 2.0, z: 0.75 };
        let n = e.to_null();
        assert_eq!(n.xi, 0.5);
        assert_eq!(n.eta, 2.0);
        let back = n.to_lab();
        assert_eq!(back, e);
    }
}
