//! Data-parallel helpers. With the `parallel` feature the macros expand to
//! rayon iterators; without it they fall back to the sequential std
//! iterators, so call sites stay identical. Call sites import
//! `crate::par::prelude::*` for the iterator traits.

/// Name of the active execution mode, used to label benchmark runs.
#[cfg(feature = "parallel")]
pub const MODE: &str = "parallel";
#[cfg(not(feature = "parallel"))]
pub const MODE: &str = "sequential";

/// Traits the parallel iterators need at call sites; empty when sequential.
pub mod prelude {
    #[cfg(feature = "parallel")]
    pub use rayon::prelude::*;
}

#[cfg(feature = "parallel")]
macro_rules! cfg_into_iter {
    ($e:expr) => {
        $e.into_par_iter()
    };
}

#[cfg(not(feature = "parallel"))]
macro_rules! cfg_into_iter {
    ($e:expr) => {
        $e.into_iter()
    };
}

#[cfg(feature = "parallel")]
macro_rules! cfg_iter {
    ($e:expr) => {
        $e.par_iter()
    };
}

#[cfg(not(feature = "parallel"))]
macro_rules! cfg_iter {
    ($e:expr) => {
        $e.iter()
    };
}

#[cfg(feature = "parallel")]
macro_rules! cfg_iter_mut {
    ($e:expr) => {
        $e.par_iter_mut()
    };
}

#[cfg(not(feature = "parallel"))]
macro_rules! cfg_iter_mut {
    ($e:expr) => {
        $e.iter_mut()
    };
}


/// Number of worker threads the parallel backend will use (1 when sequential).
pub fn threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}
