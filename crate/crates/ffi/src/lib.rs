//! C ABI over the market environment, the mean-variance analytics and the
//! GGI welfare functions.
//!
//! Every function returns an [`FlStatus`]. On failure a human-readable message
//! is kept per thread and can be copied out with [`fl_last_error`]. Caller
//! buffers are passed as pointer plus length; functions never allocate memory
//! the caller must free, except for the environment handle.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use fairliq::analytics;
use fairliq::fairness;
use fairliq::market_env::{EnvConfig, MarketEnv, MarketParams, PriceNoise};
use fairliq::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParams = 2,
    OutOfRange = 3,
    BadState = 4,
    ShapeMismatch = 5,
    Contract = 6,
    NonFinite = 7,
    BufferTooSmall = 8,
    Panic = 9,
    Other = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlPriceNoise {
    Gaussian = 0,
    Rademacher = 1,
    Zero = 2,
}

/// Market parameters, field for field. `num_trades` is N; `tau` must equal
/// `liquidation_horizon_days / num_trades`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FlMarketParams {
    pub initial_price: f64,
    pub annual_volatility_fraction: f64,
    pub bid_ask_spread: f64,
    pub daily_volume: f64,
    pub trading_days_per_year: f64,
    pub liquidation_horizon_days: f64,
    pub num_trades: u32,
    pub tau: f64,
    pub epsilon: f64,
    pub eta: f64,
    pub gamma: f64,
    pub sigma_step: f64,
}

impl From<&MarketParams> for FlMarketParams {
    fn from(p: &MarketParams) -> Self {
        FlMarketParams {
            initial_price: p.initial_price,
            annual_volatility_fraction: p.annual_volatility_fraction,
            bid_ask_spread: p.bid_ask_spread,
            daily_volume: p.daily_volume,
            trading_days_per_year: p.trading_days_per_year,
            liquidation_horizon_days: p.liquidation_horizon_days,
            num_trades: p.num_trades as u32,
            tau: p.tau,
            epsilon: p.epsilon,
            eta: p.eta,
            gamma: p.gamma,
            sigma_step: p.sigma_step,
        }
    }
}

impl From<&FlMarketParams> for MarketParams {
    fn from(p: &FlMarketParams) -> Self {
        MarketParams {
            initial_price: p.initial_price,
            annual_volatility_fraction: p.annual_volatility_fraction,
            bid_ask_spread: p.bid_ask_spread,
            daily_volume: p.daily_volume,
            trading_days_per_year: p.trading_days_per_year,
            liquidation_horizon_days: p.liquidation_horizon_days,
            num_trades: p.num_trades as usize,
            tau: p.tau,
            epsilon: p.epsilon,
            eta: p.eta,
            gamma: p.gamma,
            sigma_step: p.sigma_step,
        }
    }
}

/// Outcome of one environment step, excluding per-agent vectors.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct FlStepInfo {
    pub execution_price: f64,
    pub new_price: f64,
    pub done: bool,
}

/// Opaque environment handle.
pub struct FlEnv {
    inner: MarketEnv,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> FlStatus {
    match e {
        Error::InvalidParams(_) | Error::Parse(_) => FlStatus::InvalidParams,
        Error::Range(_) | Error::Index { .. } => FlStatus::OutOfRange,
        Error::State(_) | Error::NotReady { .. } => FlStatus::BadState,
        Error::Shape(_) => FlStatus::ShapeMismatch,
        Error::Contract(_) => FlStatus::Contract,
        Error::NonFinite { .. } => FlStatus::NonFinite,
        _ => FlStatus::Other,
    }
}

/// Runs `f`, turning errors and panics into status codes.
fn guard<F: FnOnce() -> Result<(), (FlStatus, String)>>(f: F) -> FlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FlStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            FlStatus::Panic
        }
    }
}

fn lib(e: Error) -> (FlStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(name: &str) -> (FlStatus, String) {
    (FlStatus::NullPointer, format!("{name} is null"))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], (FlStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, name: &str) -> Result<&'a mut [T], (FlStatus, String)> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn params_from(p: *const FlMarketParams) -> Result<MarketParams, (FlStatus, String)> {
    p.as_ref().map(MarketParams::from).ok_or_else(|| null("params"))
}

unsafe fn write_out<T>(out: *mut T, value: T, name: &str) -> Result<(), (FlStatus, String)> {
    if out.is_null() {
        return Err(null(name));
    }
    out.write(value);
    Ok(())
}

/// Copies the calling thread's last error message into `buf` as a
/// NUL-terminated string, truncating if needed. Returns the full message
/// length in bytes (excluding the terminator), or 0 when there is none.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn fl_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Static NUL-terminated version string.
#[no_mangle]
pub extern "C" fn fl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Six-client reference market: 60 days, 240 trades.
///
/// # Safety
/// `out` must be null or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn fl_market_params_reference(out: *mut FlMarketParams) -> FlStatus {
    guard(|| write_out(out, FlMarketParams::from(&MarketParams::reference()), "out"))
}

/// Derives impact and volatility parameters from market conventions:
/// ε = spread/2, η = spread/(0.01·DV), γ = spread/(0.1·DV),
/// σ = annual_vol/√days·P0, τ = T/N.
///
/// # Safety
/// `out` must be null or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn fl_market_params_from_conventions(
    initial_price: f64,
    annual_volatility_fraction: f64,
    bid_ask_spread: f64,
    daily_volume: f64,
    trading_days_per_year: f64,
    liquidation_horizon_days: f64,
    num_trades: u32,
    out: *mut FlMarketParams,
) -> FlStatus {
    guard(|| {
        let p = MarketParams::from_conventions(
            initial_price,
            annual_volatility_fraction,
            bid_ask_spread,
            daily_volume,
            trading_days_per_year,
            liquidation_horizon_days,
            num_trades as usize,
        );
        p.validate().map_err(lib)?;
        write_out(out, FlMarketParams::from(&p), "out")
    })
}

/// Creates an environment for `num_agents` sellers. On success `*out` owns a
/// handle that must be released with [`fl_env_free`].
///
/// # Safety
/// `params` must point to a valid struct, `inventories` to `num_agents`
/// values, and `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn fl_env_create(
    params: *const FlMarketParams,
    inventories: *const f64,
    num_agents: usize,
    return_window: usize,
    noise: FlPriceNoise,
    seed: u64,
    out: *mut *mut FlEnv,
) -> FlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = params_from(params)?;
        let inv = slice(inventories, num_agents, "inventories")?;
        let price_noise = match noise {
            FlPriceNoise::Gaussian => PriceNoise::Gaussian,
            FlPriceNoise::Rademacher => PriceNoise::Rademacher,
            FlPriceNoise::Zero => PriceNoise::Zero,
        };
        let env = MarketEnv::reset(p, EnvConfig { return_window, price_noise }, inv, seed).map_err(lib)?;
        out.write(Box::into_raw(Box::new(FlEnv { inner: env })));
        Ok(())
    })
}

/// Releases a handle from [`fl_env_create`]. Null is ignored.
///
/// # Safety
/// `env` must be null or a live handle not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fl_env_free(env: *mut FlEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Starts a new episode with the original inventories. The shock stream
/// continues rather than rewinding.
///
/// # Safety
/// `env` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fl_env_reset(env: *mut FlEnv) -> FlStatus {
    guard(|| {
        let env = env.as_mut().ok_or_else(|| null("env"))?;
        env.inner.restart();
        Ok(())
    })
}

/// Number of agents, written to `out`.
///
/// # Safety
/// `env` must be null or a live handle; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn fl_env_num_agents(env: *const FlEnv, out: *mut usize) -> FlStatus {
    guard(|| {
        let env = env.as_ref().ok_or_else(|| null("env"))?;
        write_out(out, env.inner.state().num_agents(), "out")
    })
}

/// Length of one observation vector (return window + 2).
///
/// # Safety
/// `env` must be null or a live handle; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn fl_env_observation_dim(env: *const FlEnv, out: *mut usize) -> FlStatus {
    guard(|| {
        let env = env.as_ref().ok_or_else(|| null("env"))?;
        write_out(out, env.inner.config().return_window + 2, "out")
    })
}

/// Advances one step with selling fractions `actions[0..num_agents]`.
/// Executed shares and cash captured per agent are written to the two
/// output arrays, each of length `num_agents`; either may be null.
///
/// # Safety
/// Pointers must be null or valid for the given lengths.
#[no_mangle]
pub unsafe extern "C" fn fl_env_step(
    env: *mut FlEnv,
    actions: *const f64,
    num_agents: usize,
    executed_out: *mut f64,
    captures_out: *mut f64,
    info_out: *mut FlStepInfo,
) -> FlStatus {
    guard(|| {
        let env = env.as_mut().ok_or_else(|| null("env"))?;
        let a = slice(actions, num_agents, "actions")?;
        let outcome = env.inner.step(a).map_err(lib)?;
        if !executed_out.is_null() {
            slice_mut(executed_out, num_agents, "executed_out")?.copy_from_slice(&outcome.executed_shares);
        }
        if !captures_out.is_null() {
            slice_mut(captures_out, num_agents, "captures_out")?.copy_from_slice(&outcome.captures);
        }
        if !info_out.is_null() {
            info_out.write(FlStepInfo {
                execution_price: outcome.execution_price,
                new_price: outcome.new_price,
                done: outcome.done,
            });
        }
        Ok(())
    })
}

/// Writes agent `agent`'s observation `[returns.., m, l]` into `buf`, which
/// must hold at least [`fl_env_observation_dim`] values.
///
/// # Safety
/// `env` must be null or a live handle; `buf` valid for `len` values.
#[no_mangle]
pub unsafe extern "C" fn fl_env_observe(env: *const FlEnv, agent: usize, buf: *mut f64, len: usize) -> FlStatus {
    guard(|| {
        let env = env.as_ref().ok_or_else(|| null("env"))?;
        let features = env.inner.observe(agent).map_err(lib)?.to_features();
        if len < features.len() {
            return Err((FlStatus::BufferTooSmall, format!("observation needs {} values, got {len}", features.len())));
        }
        slice_mut(buf, len, "buf")?[..features.len()].copy_from_slice(&features);
        Ok(())
    })
}

/// Whether the episode has finished.
///
/// # Safety
/// `env` must be null or a live handle; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn fl_env_is_done(env: *const FlEnv, out: *mut bool) -> FlStatus {
    guard(|| {
        let env = env.as_ref().ok_or_else(|| null("env"))?;
        write_out(out, env.inner.state().is_done(), "out")
    })
}

/// Optimal sales over `steps` trades for `shares`, written to
/// `sales_out[0..steps]`.
///
/// # Safety
/// `params` must be valid; `sales_out` valid for `len` values.
#[no_mangle]
pub unsafe extern "C" fn fl_optimal_trajectory(
    params: *const FlMarketParams,
    shares: f64,
    steps: usize,
    risk_aversion: f64,
    sales_out: *mut f64,
    len: usize,
) -> FlStatus {
    guard(|| {
        let p = params_from(params)?;
        if len < steps {
            return Err((FlStatus::BufferTooSmall, format!("trajectory needs {steps} values, got {len}")));
        }
        let traj = analytics::optimal_trajectory(shares, steps, &p, risk_aversion).map_err(lib)?;
        slice_mut(sales_out, len, "sales_out")?[..steps].copy_from_slice(&traj.sales);
        Ok(())
    })
}

/// U = E + λV of the optimal plan; zero for zero shares.
///
/// # Safety
/// `params` must be valid; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn fl_optimal_utility(
    params: *const FlMarketParams,
    shares: f64,
    steps: usize,
    risk_aversion: f64,
    out: *mut f64,
) -> FlStatus {
    guard(|| {
        let p = params_from(params)?;
        let u = analytics::optimal_utility(shares, steps, &p, risk_aversion).map_err(lib)?;
        write_out(out, u, "out")
    })
}

/// Expected shortfall, variance and utility of an arbitrary schedule
/// `sales[0..steps]` liquidating `shares`.
///
/// # Safety
/// `params` must be valid; `sales` valid for `steps` values; outputs null
/// or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn fl_schedule_utility(
    params: *const FlMarketParams,
    shares: f64,
    sales: *const f64,
    steps: usize,
    risk_aversion: f64,
    shortfall_out: *mut f64,
    variance_out: *mut f64,
    utility_out: *mut f64,
) -> FlStatus {
    guard(|| {
        let p = params_from(params)?;
        let s = slice(sales, steps, "sales")?;
        let traj = analytics::Trajectory::from_sales(shares, s.to_vec(), p.tau).map_err(lib)?;
        let b = analytics::utility(&traj, &p, risk_aversion).map_err(lib)?;
        for (ptr, v) in [(shortfall_out, b.expected_shortfall), (variance_out, b.variance), (utility_out, b.utility)] {
            if !ptr.is_null() {
                ptr.write(v);
            }
        }
        Ok(())
    })
}

/// `U(x*_prev) − U(x*_new)` for one step.
///
/// # Safety
/// `params` must be valid; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn fl_step_reward(
    params: *const FlMarketParams,
    prev_inventory: f64,
    prev_steps: usize,
    new_inventory: f64,
    new_steps: usize,
    risk_aversion: f64,
    out: *mut f64,
) -> FlStatus {
    guard(|| {
        let p = params_from(params)?;
        let r = analytics::step_reward(prev_inventory, prev_steps, new_inventory, new_steps, &p, risk_aversion)
            .map_err(lib)?;
        write_out(out, r, "out")
    })
}

/// GGI of `payoffs` with weights built from `initial_shares`, both of
/// length `n`.
///
/// # Safety
/// Arrays must be valid for `n` values; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn fl_ggi(
    payoffs: *const f64,
    initial_shares: *const f64,
    n: usize,
    tie_epsilon: f64,
    out: *mut f64,
) -> FlStatus {
    guard(|| {
        let v = slice(payoffs, n, "payoffs")?;
        let s = slice(initial_shares, n, "initial_shares")?;
        let w = fairness::build_weights(s, tie_epsilon).map_err(lib)?;
        write_out(out, fairness::ggi(v, &w).map_err(lib)?, "out")
    })
}

/// Writes `r_j − share_j·G(r)` into `adjusted_out[0..n]`.
///
/// # Safety
/// Arrays must be valid for `n` values.
#[no_mangle]
pub unsafe extern "C" fn fl_adjust_rewards(
    rewards: *const f64,
    initial_shares: *const f64,
    n: usize,
    tie_epsilon: f64,
    adjusted_out: *mut f64,
) -> FlStatus {
    guard(|| {
        let r = slice(rewards, n, "rewards")?;
        let s = slice(initial_shares, n, "initial_shares")?;
        let w = fairness::build_weights(s, tie_epsilon).map_err(lib)?;
        let adjusted = fairness::adjust_rewards(r, &w).map_err(lib)?;
        slice_mut(adjusted_out, n, "adjusted_out")?.copy_from_slice(&adjusted);
        Ok(())
    })
}
