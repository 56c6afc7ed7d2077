//! One PASS/FAIL line per acceptance criterion. Exits non-zero on any FAIL.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::{contains, d, dump_process_memory, Cluster, TestServer, COUNTING, PAIRS};
use duet_client::{encrypt_row, negotiate, ClientError};
use duet_core::checker::{typecheck, validate_query, TyEnv};
use duet_core::interp::{apply_query, evaluate, Database, ValEnv};
use duet_core::lang::{parse, parse_type, Ty};
use duet_core::mech::{gauss_sigma, NoiseSource, Sampler};
use duet_core::testkit::{random_query, unprotected_flows};
use duet_enclave::{verify_quote, EnclavePublicKey, HardwareRoot, Quote, QuoteReject};
use reqwest::blocking::Client;
use serde_json::{json, Value};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn within(started: Instant, limit: Duration) -> Result<(), String> {
    let took = started.elapsed();
    if took < limit {
        Ok(())
    } else {
        Err(format!("took {took:?}, limit {limit:?}"))
    }
}

fn golden_types() -> Outcome {
    let t = Instant::now();
    let standalone = parse(
        "let eps = R+[1.5] in
         let delta = R+[0.000001] in
         gauss[R+[1.0], eps, delta] <x> { x }",
    )
    .map_err(|e| e.to_string())?;
    let env: TyEnv = [("x".to_string(), Ty::Real)].into();
    let (_, pm) = typecheck(&standalone, &env).map_err(|e| e.to_string())?;
    let a = pm.get("x").to_string();

    let pfn = parse("plam . x : R => gauss[R+[1.0], R+[1.0], R+[0.001]] <x> { x }").map_err(|e| e.to_string())?;
    let b = typecheck(&pfn, &TyEnv::new()).map_err(|e| e.to_string())?.0.to_string();

    let counting = parse(COUNTING).map_err(|e| e.to_string())?;
    let c = typecheck(&counting, &TyEnv::new()).map_err(|e| e.to_string())?.0.to_string();

    let want = [
        "<1.5, 0.000001>",
        "R@<1.0, 0.001> => R",
        "M [L1,U | star, dR::dR::[]]@<1.0, 0.001> => R",
    ];
    for (got, want) in [a, b, c].iter().zip(want) {
        if got != want {
            return Err(format!("got `{got}`, want `{want}`"));
        }
    }
    within(t, Duration::from_secs(1))?;
    Ok(format!("{} programs, {:?}", want.len(), t.elapsed()))
}

fn composition() -> Outcome {
    let t = Instant::now();
    let s = TestServer::start("2.0", "0.002");
    let server = negotiate(&s.url, &s.policy("2.0", "0.002")).map_err(|e| e.to_string())?;
    let mut seen = Vec::new();
    for want in [("1.0", "0.001"), ("0", "0")] {
        let out = server.query(COUNTING).map_err(|e| e.to_string())?;
        if !out.remaining_verified {
            return Err("remaining budget not signed by the enclave".into());
        }
        let got = out.remaining.budget();
        if (got.eps, got.delta) != (d(want.0), d(want.1)) {
            return Err(format!("remaining {got}, want <{}, {}>", want.0, want.1));
        }
        seen.push(got.to_string());
    }
    match server.query(COUNTING) {
        Err(ClientError::Server { status: 403, body }) if body.error_kind == "BudgetExhausted" => {}
        other => return Err(format!("third query: {other:?}")),
    }
    within(t, Duration::from_secs(1))?;
    Ok(format!("{} then BudgetExhausted", seen.join(" -> ")))
}

fn calibration() -> Outcome {
    let t = Instant::now();
    const N: usize = 100_000;
    let sigma = gauss_sigma(d("1.0"), d("1.0"), d("0.001")).map_err(|e| e.to_string())?;
    let closed = (2.0 * 1250f64.ln()).sqrt();
    if (sigma - closed).abs() > 1e-12 {
        return Err(format!("sigma {sigma} != {closed}"));
    }
    let mut s = Sampler::from_entropy();
    let moments = |xs: Vec<f64>| {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    };
    let std = moments((0..N).map(|_| s.gauss(sigma)).collect()).sqrt();
    let var = moments((0..N).map(|_| s.laplace(1.0)).collect());
    let (g, l) = ((std - closed).abs() / closed, (var - 2.0).abs() / 2.0);
    if g > 0.02 || l > 0.05 {
        return Err(format!("gauss std {std:.4} ({:.2}%), laplace var {var:.4} ({:.2}%)", g * 100.0, l * 100.0));
    }
    within(t, Duration::from_secs(10))?;
    Ok(format!("gauss std {std:.4} vs {closed:.4}, laplace var {var:.4} vs 2"))
}

fn database(n: usize) -> Arc<Database> {
    let Ty::Matrix(m) = parse_type(PAIRS).unwrap() else {
        unreachable!()
    };
    let mut db = Database::new(m);
    for i in 0..n {
        db.push_row(vec![i as f64, 1.0]).unwrap();
    }
    Arc::new(db)
}

fn empirical_dp() -> Outcome {
    let t = Instant::now();
    const RUNS: usize = 100_000;
    let (eps, delta, slack) = (1.0f64, 0.001f64, 1.2f64);
    let sigma = gauss_sigma(d("1.0"), d("1.0"), d("0.001")).map_err(|e| e.to_string())?;
    let query = evaluate(&parse(COUNTING).unwrap(), &ValEnv::new(), &mut Sampler::seeded(0)).map_err(|e| e.to_string())?;
    let width = sigma / 4.0;
    let bins = 48;
    let lo = 100.5 - 6.0 * sigma;
    let histogram = |n: usize, seed: u64| -> Result<Vec<f64>, String> {
        let db = database(n);
        let mut noise = Sampler::seeded(seed);
        let mut counts = vec![0u64; bins + 2];
        for _ in 0..RUNS {
            let v = apply_query(&query, db.clone(), &mut noise).map_err(|e| e.to_string())?;
            let k = ((v - lo) / width).floor();
            let slot = if k < 0.0 { 0 } else if k >= bins as f64 { bins + 1 } else { k as usize + 1 };
            counts[slot] += 1;
        }
        Ok(counts.into_iter().map(|c| c as f64 / RUNS as f64).collect())
    };
    let (x, y) = (histogram(100, 1)?, histogram(101, 2)?);
    let mut worst = 0.0f64;
    for (i, (px, py)) in x.iter().zip(&y).enumerate() {
        for (a, b) in [(px, py), (py, px)] {
            let bound = slack * (eps.exp() * b + delta);
            if *a > bound {
                return Err(format!("bin {i}: {a} > {bound}"));
            }
            worst = worst.max(a / bound);
        }
    }
    within(t, Duration::from_secs(60))?;
    Ok(format!("{} bins, worst ratio to bound {worst:.3}, {:?}", bins + 2, t.elapsed()))
}

fn rejections() -> Outcome {
    let s = TestServer::start("2.0", "0.002");
    let server = negotiate(&s.url, &s.policy("2.0", "0.002")).map_err(|e| e.to_string())?;
    server.submit(&[1.0, 2.0]).map_err(|e| e.to_string())?;
    let before = server.budget().map_err(|e| e.to_string())?;
    let cases = [
        ("plam . df : M [L1, U | star, dR :: dR :: []] => real (rows df)", "InfiniteCost"),
        (
            "plam . df : M [L1, U | star, dR :: []] => gauss[R+[1.0], R+[1.0], R+[0.001]] <df> { real (rows df) }",
            "SchemaMismatch",
        ),
        (
            "plam . df : M [L1, U | star, dR :: dR :: []] => gauss[R+[0.5], R+[1.0], R+[0.001]] <df> { real (rows df) }",
            "TypeError",
        ),
    ];
    for (program, kind) in cases {
        match server.query(program) {
            Err(ClientError::Server { status: 400, body }) if body.error_kind == kind => {}
            other => return Err(format!("want {kind}, got {other:?}")),
        }
    }
    let after = server.budget().map_err(|e| e.to_string())?;
    if after != before || !after.verified {
        return Err(format!("budget moved: {before:?} -> {after:?}"));
    }
    let schema = parse_type(PAIRS).unwrap();
    let mut accepted = 0;
    for seed in 0..5000 {
        let src = random_query(seed, PAIRS);
        let e = parse(&src).map_err(|e| e.to_string())?;
        if validate_query(&e, &schema).is_ok() {
            accepted += 1;
            if !unprotected_flows(&e).is_empty() {
                return Err(format!("accepted leaking program: {src}"));
            }
        }
    }
    Ok(format!("3 rejections with budget at serial {}, {accepted}/5000 random accepted programs leak-free", after.budget.serial))
}

fn flip_every_bit(q: &Quote, root: &HardwareRoot, m: &[u8; 32], nonce: &[u8; 16]) -> Result<usize, String> {
    let mut tried = 0;
    let mut expect_reject = |bad: Quote, what: &str, bit: usize| -> Result<(), String> {
        tried += 1;
        match verify_quote(&bad, &root.public(), m, nonce) {
            Err(QuoteReject::BadSignature) => Ok(()),
            other => Err(format!("{what} bit {bit}: {other:?}")),
        }
    };
    for bit in 0..256 {
        let mut bad = q.clone();
        bad.measurement[bit / 8] ^= 1 << (bit % 8);
        expect_reject(bad, "measurement", bit)?;
    }
    for bit in 0..128 {
        let mut bad = q.clone();
        bad.nonce[bit / 8] ^= 1 << (bit % 8);
        expect_reject(bad, "nonce", bit)?;
    }
    for bit in 0..512 {
        let mut bad = q.clone();
        bad.sig[bit / 8] ^= 1 << (bit % 8);
        expect_reject(bad, "sig", bit)?;
        let mut key = *q.enclave_pubkey.as_bytes();
        key[bit / 8] ^= 1 << (bit % 8);
        let mut bad = q.clone();
        bad.enclave_pubkey = EnclavePublicKey::from_bytes(key);
        expect_reject(bad, "pubkey", bit)?;
    }
    Ok(tried)
}

fn tamper() -> Outcome {
    let root = Arc::new(HardwareRoot::generate());
    let cfg = common::config("2.0", "0.002");
    let first = TestServer::launch(root.clone(), &cfg, Box::new(Sampler::from_entropy()));
    let nonce = [0x5a; 16];
    let body = Client::new()
        .get(format!("{}/attest?nonce={}", first.url, hex::encode(nonce)))
        .send()
        .and_then(|r| r.text())
        .map_err(|e| e.to_string())?;
    let quote: Quote = serde_json::from_str(&body).map_err(|e| e.to_string())?;
    verify_quote(&quote, &root.public(), &first.measurement, &nonce).map_err(|e| e.to_string())?;
    let flips = flip_every_bit(&quote, &root, &first.measurement, &nonce)?;

    // Envelopes sealed for the first run, replayed after a restart.
    let old_key = quote.enclave_pubkey;
    let stale: Vec<_> = (0..50)
        .map(|i| encrypt_row(&[i as f64 + 0.25, -73.21], &old_key).unwrap())
        .collect();
    drop(first);
    let second = TestServer::launch(root, &cfg, Box::new(Sampler::from_entropy()));
    for env in &stale {
        let r = Client::new()
            .post(format!("{}/insert", second.url))
            .json(&json!({ "envelope": env.to_json() }))
            .send()
            .map_err(|e| e.to_string())?;
        let status = r.status().as_u16();
        let body: Value = r.json().map_err(|e| e.to_string())?;
        if status != 400 || body["error_kind"] != "DecryptError" {
            return Err(format!("stale envelope: {status} {body}"));
        }
    }

    // In-process: the gateway's own state.
    let server = negotiate(&second.url, &second.policy("2.0", "0.002")).map_err(|e| e.to_string())?;
    let rows: Vec<[f64; 2]> = (0..30).map(|i| [37.774_929 + i as f64, -122.419_416 - i as f64]).collect();
    for r in &rows {
        server.submit(r).map_err(|e| e.to_string())?;
    }
    let dump = second.gateway.memory_dump();
    for r in &rows {
        if contains(&dump, r[0].to_string().as_bytes()) {
            return Err(format!("gateway state holds plaintext {}", r[0]));
        }
    }
    for secret in &second.secrets {
        if contains(&dump, secret) || contains(&dump, hex::encode(secret).as_bytes()) {
            return Err("gateway state holds an enclave private key".into());
        }
    }

    // Separate processes: the whole address space of the gateway.
    let cluster = Cluster::start("2.0", "0.002");
    let server = negotiate(&cluster.url, &cluster.policy("2.0", "0.002")).map_err(|e| e.to_string())?;
    for r in &rows {
        server.submit(r).map_err(|e| e.to_string())?;
    }
    let mem = dump_process_memory(cluster.gateway.id()).map_err(|e| e.to_string())?;
    let log = std::fs::read_to_string(cluster.dir.path().join("records.jsonl")).map_err(|e| e.to_string())?;
    let last: Value = serde_json::from_str(log.lines().last().unwrap_or("")).map_err(|e| e.to_string())?;
    let stored = duet_enclave::Envelope::from_json(last).map_err(|e| e.to_string())?;
    if !contains(&mem, &stored.ciphertext) {
        return Err("process dump missed a stored ciphertext; dump is not trustworthy".into());
    }
    for r in &rows {
        if contains(&mem, format!("{},{}", r[0], r[1]).as_bytes()) || contains(&mem, r[0].to_string().as_bytes()) {
            return Err(format!("gateway process memory holds plaintext {}", r[0]));
        }
    }
    Ok(format!(
        "{flips} quote bit flips rejected, 50 stale envelopes DecryptError, {} MiB gateway dump clean",
        mem.len() >> 20
    ))
}

fn end_to_end() -> Outcome {
    let t = Instant::now();
    let s = TestServer::start("2.0", "0.002");
    let server = negotiate(&s.url, &s.policy("2.0", "0.002")).map_err(|e| e.to_string())?;
    let mut count = 0;
    for i in 0..1000 {
        count = server.submit(&[i as f64 * 0.01, 42.0]).map_err(|e| e.to_string())?;
    }
    if count != 1000 {
        return Err(format!("enclave holds {count} rows"));
    }
    let out = server.query(COUNTING).map_err(|e| e.to_string())?;
    if (out.value - 1000.0).abs() > 15.1 {
        return Err(format!("count {} is more than 15.1 from 1000", out.value));
    }
    within(t, Duration::from_secs(30))?;
    Ok(format!("noised count {:.2}, {:?}", out.value, t.elapsed()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("golden typechecking", golden_types),
        ("composition", composition),
        ("mechanism calibration", calibration),
        ("empirical dp", empirical_dp),
        ("rejection suite", rejections),
        ("attestation tamper suite", tamper),
        ("end to end", end_to_end),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
