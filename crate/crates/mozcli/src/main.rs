use clap::{Parser, Subcommand};
use moz_core::consent::ConsentScope;
use moz_core::session::SecurityMode;
use mozcli::{bench, device, modeltool, stack, user, UserEnv};
use obeliskd::api::b64;
use std::path::PathBuf;
use std::time::Duration;

#[derive(Parser)]
#[command(name = "mozcli", about = "Edge tooling for the encrypted-analytics pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a complete single-process demo stack (orchestrator + 3 parties).
    Stack {
        /// Directory for generated keys, configs and the user environment.
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value = "mal-lite")]
        mode: SecurityMode,
        /// Micro-batch flush timeout in milliseconds.
        #[arg(long, default_value_t = 2000)]
        flush_ms: u64,
        /// Persist orchestrator stores under the stack directory.
        #[arg(long)]
        persist: bool,
        /// Plaintext model JSON; a random demo model when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Simulate the IoT sensor: encrypt and ingest samples.
    Device {
        #[arg(long)]
        config: PathBuf,
        /// Number of samples to send.
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// Samples per second (0 = as fast as possible).
        #[arg(long, default_value_t = 0.0)]
        rate: f64,
        /// Read samples from a CSV file (187 values per row, optional label).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Create consent-bound key-share envelopes without submitting.
    Keyshare {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated data-point ids (ad hoc consent).
        #[arg(long, value_delimiter = ',')]
        data_ids: Vec<u64>,
        /// Streaming window "begin_ms,end_ms" instead of data ids.
        #[arg(long, num_args = 2, value_delimiter = ',')]
        window: Option<Vec<u64>>,
    },
    /// Submit an ad hoc analysis over selected data points.
    Request {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',')]
        data_ids: Vec<u64>,
        /// Use the latest N ingested samples instead of explicit ids.
        #[arg(long)]
        latest: Option<usize>,
        /// Poll until the result is stored and print it.
        #[arg(long)]
        wait: bool,
    },
    /// Register a streaming consent window.
    Stream {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 60)]
        duration_secs: u64,
        #[arg(long, default_value_t = 4)]
        batch_size: usize,
    },
    /// Fetch and decrypt an analysis result.
    Result {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        analysis: String,
    },
    /// Split a plaintext model into three provisioning share files.
    ModelShare {
        /// Plaintext model JSON; a random demo model when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Labeled CSV to report plaintext accuracy.
        #[arg(long)]
        check_csv: Option<PathBuf>,
    },
    /// Latency benchmarks against a running stack (or self-hosted).
    Bench {
        /// Existing user environment; mutually exclusive with --self-hosted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Spawn a fresh in-process stack per security mode.
        #[arg(long)]
        self_hosted: bool,
        #[arg(long, default_value = "adhoc")]
        mode: String,
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 16, 64, 256])]
        batch_sizes: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        reps: usize,
        /// Ingest-rate ramp for streaming mode (samples/s).
        #[arg(long, value_delimiter = ',', default_values_t = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0])]
        rates: Vec<f64>,
        /// Security modes to benchmark.
        #[arg(long, value_delimiter = ',', default_values = ["sh", "mal-lite"])]
        security: Vec<SecurityMode>,
        /// Write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn client() -> reqwest::blocking::Client {
    reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(600))
        .build()
        .expect("http client")
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| "info".into()),
        )
        .init();
    match Cli::parse().command {
        Command::Stack {
            dir,
            mode,
            flush_ms,
            persist,
            model,
        } => {
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async move {
                let mut opts = stack::StackOptions::new(dir);
                opts.mode = mode;
                opts.flush_interval_ms = flush_ms;
                opts.persist = persist;
                if let Some(path) = model {
                    opts.model = Some(modeltool::load_model(&path)?);
                }
                let handle = stack::spawn(opts).await?;
                println!("orchestrator: {}", handle.orchestrator_url);
                println!("user env:     {}", handle.user_env_path.display());
                println!("press Ctrl-C to stop");
                tokio::signal::ctrl_c().await?;
                handle.stop().await;
                Ok::<_, anyhow::Error>(())
            })?;
        }
        Command::Device {
            config,
            count,
            rate,
            csv,
        } => {
            let mut env = UserEnv::load(&config)?;
            let http = client();
            let samples: Vec<Vec<f64>> = match csv {
                Some(path) => device::read_csv_samples(&path)?
                    .into_iter()
                    .map(|(v, _)| v)
                    .collect(),
                None => (0..count)
                    .map(|i| device::synthetic_sample(env.nonce_counter + i as u64))
                    .collect(),
            };
            let gap = (rate > 0.0).then(|| Duration::from_secs_f64(1.0 / rate));
            for sample in samples.iter().take(count.max(1)) {
                let ts = device::send_sample(&mut env, &http, sample)?;
                env.save(&config)?;
                println!("ingested sample at t={ts}");
                if let Some(gap) = gap {
                    std::thread::sleep(gap);
                }
            }
        }
        Command::Keyshare {
            config,
            data_ids,
            window,
        } => {
            let env = UserEnv::load(&config)?;
            let scope = match window {
                Some(w) if w.len() == 2 => ConsentScope::Stream {
                    t_begin_ms: w[0],
                    t_end_ms: w[1],
                },
                _ => ConsentScope::AdHoc { data_ids },
            };
            let ctx = user::consent_context(&env, scope)?;
            let envelopes = user::make_keyshares(&env.device_key()?, &ctx)?;
            let out = serde_json::json!({
                "envelopes_b64": envelopes.iter().map(|e| b64(e)).collect::<Vec<_>>(),
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Command::Request {
            config,
            data_ids,
            latest,
            wait,
        } => {
            let env = UserEnv::load(&config)?;
            let http = client();
            let ids = match latest {
                Some(n) => {
                    anyhow::ensure!(env.ingested.len() >= n, "only {} samples ingested", env.ingested.len());
                    env.ingested[env.ingested.len() - n..].to_vec()
                }
                None => data_ids,
            };
            anyhow::ensure!(!ids.is_empty(), "no data ids given");
            let id = user::request_adhoc(&env, &http, ids)?;
            println!("analysis id: {id}");
            if wait {
                loop {
                    match user::fetch_result(&env, &http, &id) {
                        Ok(result) => {
                            print_result(&id, &result);
                            break;
                        }
                        Err(_) => std::thread::sleep(Duration::from_millis(200)),
                    }
                }
            }
        }
        Command::Stream {
            config,
            duration_secs,
            batch_size,
        } => {
            let env = UserEnv::load(&config)?;
            let now = obeliskd::now_ms();
            let id = user::request_stream(
                &env,
                &client(),
                now,
                now + duration_secs * 1000,
                batch_size,
            )?;
            println!("stream id: {id}");
        }
        Command::Result { config, analysis } => {
            let env = UserEnv::load(&config)?;
            let result = user::fetch_result(&env, &client(), &analysis)?;
            print_result(&analysis, &result);
        }
        Command::ModelShare {
            model,
            out_dir,
            check_csv,
        } => {
            let model = match model {
                Some(path) => modeltool::load_model(&path)?,
                None => modeltool::demo_model(1),
            };
            let paths = modeltool::write_share_files(&model, &out_dir)?;
            for path in &paths {
                println!("wrote {}", path.display());
            }
            if let Some(csv) = check_csv {
                let rows = device::read_csv_samples(&csv)?;
                match modeltool::plaintext_accuracy(&model, &rows) {
                    Some(acc) => println!("plaintext accuracy: {:.2}%", acc * 100.0),
                    None => println!("no labeled rows in {}", csv.display()),
                }
            }
        }
        Command::Bench {
            config,
            self_hosted,
            mode,
            batch_sizes,
            reps,
            rates,
            security,
            out,
        } => {
            let mut reports = serde_json::Map::new();
            for sec in security {
                let label = match sec {
                    SecurityMode::SemiHonest => "sh",
                    SecurityMode::MalLite => "mal-lite",
                };
                let (mut env, stack_guard) = if self_hosted {
                    let runtime = tokio::runtime::Runtime::new()?;
                    let dir = tempfile_dir()?;
                    let mut opts = stack::StackOptions::new(&dir);
                    opts.mode = sec;
                    opts.flush_interval_ms = 1000;
                    let handle = runtime.block_on(stack::spawn(opts))?;
                    (handle.user_env.clone(), Some((runtime, handle)))
                } else {
                    let path = config
                        .clone()
                        .ok_or_else(|| anyhow::anyhow!("--config or --self-hosted required"))?;
                    (UserEnv::load(&path)?, None)
                };
                let http = client();
                match mode.as_str() {
                    "adhoc" => {
                        let report = bench::run_adhoc(&mut env, &http, &batch_sizes, reps, label)?;
                        bench::print_adhoc(&report);
                        reports.insert(format!("adhoc-{label}"), serde_json::to_value(&report)?);
                    }
                    "stream" => {
                        let mut entries = Vec::new();
                        for &size in &batch_sizes {
                            let entry = bench::run_stream_ramp(
                                &mut env, &http, size, &rates, size * 2,
                            )?;
                            entries.push(entry);
                        }
                        let report = bench::StreamReport {
                            security_mode: label.into(),
                            entries,
                        };
                        bench::print_stream(&report);
                        reports.insert(format!("stream-{label}"), serde_json::to_value(&report)?);
                    }
                    other => anyhow::bail!("unknown bench mode {other}"),
                }
                if let Some((runtime, handle)) = stack_guard {
                    runtime.block_on(handle.stop());
                }
            }
            if let Some(path) = out {
                std::fs::write(&path, serde_json::to_vec_pretty(&reports)?)?;
                println!("report written to {}", path.display());
            }
        }
    }
    Ok(())
}

fn print_result(analysis: &str, result: &user::DecryptedResult) {
    println!("analysis {analysis}:");
    for (row, class) in result.rows.iter().zip(&result.classes) {
        let scores: Vec<String> = row.iter().map(|v| format!("{v:+.4}")).collect();
        println!("  class {class}  scores [{}]", scores.join(", "));
    }
}

fn tempfile_dir() -> anyhow::Result<PathBuf> {
    let dir = std::env::temp_dir().join(format!("moz-bench-{}", obeliskd::random_id("run")));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}
