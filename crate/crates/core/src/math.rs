//! Float math shim: route the transcendental functions through `libm`
//! when building without `std`.

#[cfg(all(not(feature = "std"), feature = "libm"))]
pub(crate) trait FloatExt {
    fn powf(self, e: f64) -> f64;
    fn sqrt(self) -> f64;
    fn ln(self) -> f64;
    fn exp(self) -> f64;
    fn round(self) -> f64;
}

#[cfg(all(not(feature = "std"), feature = "libm"))]
impl FloatExt for f64 {
    fn powf(self, e: f64) -> f64 {
        libm::pow(self, e)
    }
    fn sqrt(self) -> f64 {
        libm::sqrt(self)
    }
    fn ln(self) -> f64 {
        libm::log(self)
    }
    fn exp(self) -> f64 {
        libm::exp(self)
    }
    fn round(self) -> f64 {
        libm::round(self)
    }
}
