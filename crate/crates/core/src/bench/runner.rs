/// Maps `f` over `jobs`, keeping job order in the output. With the `parallel`
/// feature the jobs run on the rayon pool.
#[cfg(feature = "parallel")]
pub fn run_jobs<J, R, F>(jobs: &[J], f: F) -> Vec<R>
where
    J: Sync,
    R: Send,
    F: Fn(&J) -> R + Sync + Send,
{
    use rayon::prelude::*;
    jobs.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn run_jobs<J, R, F>(jobs: &[J], f: F) -> Vec<R>
where
    J: Sync,
    R: Send,
    F: Fn(&J) -> R + Sync + Send,
{
    jobs.iter().map(f).collect()
}

/// Sequential reference, always available.
pub fn run_jobs_sequential<J, R, F>(jobs: &[J], f: F) -> Vec<R>
where
    F: Fn(&J) -> R,
{
    jobs.iter().map(f).collect()
}
