//! Log-concave measure zoo, isotropization, exact samplers and the scalar
//! functionals `sigma` (thin shell) and `kappa` (third moments).

pub mod component;
pub mod density;
pub mod functionals;
pub mod law;
pub mod spec;

pub use component::{Component1D, ComponentKind};
pub use density::{Density1D, TiltMoments1D, TILT_PANELS};
pub use functionals::{kappa_estimate, thin_shell_sigma, KappaEstimate, ThinShell};
pub use law::{isotropize, sample, Base, BodyLaw, Law, Measure, Moments, SamplePack};
pub use spec::{Affine, Body, Family, MeasureSpec};
