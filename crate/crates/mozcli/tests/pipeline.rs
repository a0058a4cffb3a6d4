//! Full-stack smoke test: devices, orchestrator, three parties and the
//! user tooling wired together in one process over real sockets.

use moz_core::infer::plain::argmax;
use moz_core::session::SecurityMode;
use mozcli::{bench, device, stack, user};
use std::time::Duration;

#[tokio::test(flavor = "multi_thread")]
async fn single_sample_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut opts = stack::StackOptions::new(dir.path());
    opts.mode = SecurityMode::MalLite;
    let handle = stack::spawn(opts).await.unwrap();
    let mut env = handle.user_env.clone();
    let model = mozcli::modeltool::load_model(&handle.dir.join("model.json")).unwrap();

    let result = tokio::task::spawn_blocking(move || {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .unwrap();
        let sample = device::synthetic_sample(42);
        let ts = device::send_sample(&mut env, &http, &sample).unwrap();
        bench::ensure_samples(&mut env, &http, 1).unwrap();
        let id = user::request_adhoc(&env, &http, vec![ts]).unwrap();
        // poll until the result decrypts
        let deadline = std::time::Instant::now() + Duration::from_secs(120);
        loop {
            match user::fetch_result(&env, &http, &id) {
                Ok(result) => break (sample, result),
                Err(_) if std::time::Instant::now() < deadline => {
                    std::thread::sleep(Duration::from_millis(100))
                }
                Err(e) => panic!("result never arrived: {e}"),
            }
        }
    })
    .await
    .unwrap();

    let (sample, decrypted) = result;
    assert_eq!(decrypted.rows.len(), 1);
    assert_eq!(decrypted.rows[0].len(), 5);
    // the secure pipeline classifies like the plaintext model
    let plain_scores = model.forward_f64(&sample);
    assert_eq!(
        decrypted.classes[0],
        mozcli::CLASS_LABELS[argmax(&plain_scores)],
        "mpc scores {:?} vs plaintext {:?}",
        decrypted.rows[0],
        plain_scores
    );
    handle.stop().await;
}
