//! Benchmark harness: end-to-end latency for ad hoc batches and the
//! sustainable-ingest-rate ramp for streaming.
//!
//! Latencies come from the orchestrator's metadata timestamps: an ad hoc
//! analysis spans request submission to result storage; a streamed batch
//! additionally spans the batch fill time, so the first data point of a
//! batch experiences the maximum end-to-end latency and the last one the
//! minimum.

use crate::{device, user, UserEnv};
use obeliskd::api::{AnalysisState, AnalysisView};
use serde::{Deserialize, Serialize};
use std::time::{Duration, Instant};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdhocEntry {
    pub batch_size: usize,
    pub latencies_ms: Vec<u64>,
    pub mean_ms: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdhocReport {
    pub security_mode: String,
    pub repetitions: usize,
    pub entries: Vec<AdhocEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RatePoint {
    pub rate_per_s: f64,
    pub batches: usize,
    pub mean_min_e2e_ms: f64,
    pub mean_max_e2e_ms: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StreamEntry {
    pub batch_size: usize,
    pub points: Vec<RatePoint>,
    /// Mean of the plateau (first rate step) minimum latencies; the red
    /// line a ramp plot would show.
    pub plateau_mean_ms: f64,
    /// Highest tested rate whose minimum latency stayed on the plateau.
    pub knee_rate_per_s: Option<f64>,
    /// Latencies observed at the knee rate.
    pub max_e2e_ms: f64,
    pub min_e2e_ms: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StreamReport {
    pub security_mode: String,
    pub entries: Vec<StreamEntry>,
}

fn view(
    env: &UserEnv,
    client: &reqwest::blocking::Client,
    id: &str,
) -> anyhow::Result<AnalysisView> {
    Ok(client
        .get(format!("{}/analysis/{}", env.orchestrator, id))
        .bearer_auth(&env.token)
        .send()?
        .error_for_status()?
        .json()?)
}

fn wait_done(
    env: &UserEnv,
    client: &reqwest::blocking::Client,
    id: &str,
    timeout: Duration,
) -> anyhow::Result<AnalysisView> {
    let deadline = Instant::now() + timeout;
    loop {
        let v = view(env, client, id)?;
        match v.state {
            AnalysisState::Done => return Ok(v),
            AnalysisState::Failed => {
                anyhow::bail!(
                    "analysis {id} failed: {}",
                    v.failure_reason.unwrap_or_default()
                )
            }
            _ => {}
        }
        if Instant::now() > deadline {
            anyhow::bail!("timed out waiting for analysis {id}");
        }
        std::thread::sleep(Duration::from_millis(25));
    }
}

/// Ingests synthetic samples until at least `count` are available.
pub fn ensure_samples(
    env: &mut UserEnv,
    client: &reqwest::blocking::Client,
    count: usize,
) -> anyhow::Result<()> {
    let mut seed = env.nonce_counter;
    while env.ingested.len() < count {
        let sample = device::synthetic_sample(seed);
        device::send_sample(env, client, &sample)?;
        seed += 1;
    }
    // give the commit stage a moment so requests see every id
    std::thread::sleep(Duration::from_millis(300));
    Ok(())
}

/// Mean end-to-end latency per ad hoc batch size; `reps` analyses each.
pub fn run_adhoc(
    env: &mut UserEnv,
    client: &reqwest::blocking::Client,
    batch_sizes: &[usize],
    reps: usize,
    mode_label: &str,
) -> anyhow::Result<AdhocReport> {
    let max_size = batch_sizes.iter().copied().max().unwrap_or(0);
    ensure_samples(env, client, max_size)?;
    let mut entries = Vec::new();
    for &size in batch_sizes {
        let ids: Vec<u64> = env.ingested[env.ingested.len() - size..].to_vec();
        let mut latencies = Vec::with_capacity(reps);
        for _ in 0..reps {
            let id = user::request_adhoc(env, client, ids.clone())?;
            let v = wait_done(env, client, &id, Duration::from_secs(600))?;
            latencies.push(v.stored_ms.unwrap_or(0).saturating_sub(v.submitted_ms));
        }
        let mean_ms = latencies.iter().sum::<u64>() as f64 / latencies.len().max(1) as f64;
        entries.push(AdhocEntry {
            batch_size: size,
            latencies_ms: latencies,
            mean_ms,
        });
    }
    Ok(AdhocReport {
        security_mode: mode_label.into(),
        repetitions: reps,
        entries,
    })
}

/// Ramps the ingest rate for one batch size until the minimum end-to-end
/// latency departs its plateau; reports the knee.
pub fn run_stream_ramp(
    env: &mut UserEnv,
    client: &reqwest::blocking::Client,
    batch_size: usize,
    rates_per_s: &[f64],
    samples_per_step: usize,
) -> anyhow::Result<StreamEntry> {
    let now = obeliskd::now_ms();
    let stream_id = user::request_stream(
        env,
        client,
        now,
        now + 3_600_000,
        batch_size,
    )?;
    let mut points: Vec<RatePoint> = Vec::new();
    let mut seen_batches: std::collections::HashSet<String> = Default::default();
    let mut seed = 10_000 + env.nonce_counter;

    for &rate in rates_per_s {
        let gap = Duration::from_secs_f64(1.0 / rate.max(0.01));
        for _ in 0..samples_per_step {
            let started = Instant::now();
            let sample = device::synthetic_sample(seed);
            seed += 1;
            device::send_sample(env, client, &sample)?;
            if let Some(rest) = gap.checked_sub(started.elapsed()) {
                std::thread::sleep(rest);
            }
        }
        // Drain: wait until every batch spawned so far completes.
        let deadline = Instant::now() + Duration::from_secs(600);
        let fresh: Vec<AnalysisView> = loop {
            let v = view(env, client, &stream_id)?;
            let fresh_ids: Vec<String> = v
                .batches
                .iter()
                .filter(|b| !seen_batches.contains(*b))
                .cloned()
                .collect();
            let mut done = Vec::new();
            let mut pending = false;
            for b in &fresh_ids {
                let bv = view(env, client, b)?;
                match bv.state {
                    AnalysisState::Done => done.push(bv),
                    AnalysisState::Failed => anyhow::bail!(
                        "stream batch {b} failed: {}",
                        bv.failure_reason.unwrap_or_default()
                    ),
                    _ => pending = true,
                }
            }
            if !pending && !done.is_empty() {
                for b in fresh_ids {
                    seen_batches.insert(b);
                }
                break done;
            }
            if Instant::now() > deadline {
                anyhow::bail!("stream batches did not drain");
            }
            std::thread::sleep(Duration::from_millis(25));
        };
        // Latencies from metadata: data ids double as ingest timestamps.
        let (mut mins, mut maxes) = (Vec::new(), Vec::new());
        for bv in &fresh {
            let ids = batch_data_ids(env, client, &bv.analysis_id)?;
            let stored = bv.stored_ms.unwrap_or(0);
            if let (Some(&first), Some(&last)) = (ids.iter().min(), ids.iter().max()) {
                maxes.push(stored.saturating_sub(first));
                mins.push(stored.saturating_sub(last));
            }
        }
        let mean = |v: &[u64]| v.iter().sum::<u64>() as f64 / v.len().max(1) as f64;
        points.push(RatePoint {
            rate_per_s: rate,
            batches: fresh.len(),
            mean_min_e2e_ms: mean(&mins),
            mean_max_e2e_ms: mean(&maxes),
        });
    }

    let plateau_mean_ms = points.first().map(|p| p.mean_min_e2e_ms).unwrap_or(0.0);
    let knee = points
        .iter()
        .rev()
        .find(|p| p.mean_min_e2e_ms <= plateau_mean_ms * 1.5 + 50.0);
    Ok(StreamEntry {
        batch_size,
        plateau_mean_ms,
        knee_rate_per_s: knee.map(|p| p.rate_per_s),
        max_e2e_ms: knee.map(|p| p.mean_max_e2e_ms).unwrap_or(0.0),
        min_e2e_ms: knee.map(|p| p.mean_min_e2e_ms).unwrap_or(0.0),
        points,
    })
}

fn batch_data_ids(
    env: &UserEnv,
    client: &reqwest::blocking::Client,
    analysis_id: &str,
) -> anyhow::Result<Vec<u64>> {
    Ok(view(env, client, analysis_id)?.data_ids)
}

pub fn print_adhoc(report: &AdhocReport) {
    println!(
        "ad hoc end-to-end latency ({}; {} repetitions)",
        report.security_mode, report.repetitions
    );
    println!("{:>10} {:>12}", "batch", "mean E2E (s)");
    for entry in &report.entries {
        println!(
            "{:>10} {:>12.3}",
            entry.batch_size,
            entry.mean_ms / 1000.0
        );
    }
}

pub fn print_stream(report: &StreamReport) {
    println!("streaming ramp ({})", report.security_mode);
    println!(
        "{:>10} {:>12} {:>16} {:>16}",
        "batch", "knee (s/s)", "max E2E (s)", "min E2E (s)"
    );
    for e in &report.entries {
        println!(
            "{:>10} {:>12} {:>16.3} {:>16.3}",
            e.batch_size,
            e.knee_rate_per_s
                .map(|r| format!("{r:.2}"))
                .unwrap_or_else(|| "-".into()),
            e.max_e2e_ms / 1000.0,
            e.min_e2e_ms / 1000.0
        );
    }
}
