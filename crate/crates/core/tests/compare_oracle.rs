use std::collections::BTreeMap;

use dualrun_core::compare::{
    accuracy_from_matches, computational_accuracy, outcomes_equal, ExecutionOutcome, NormalizationPolicy,
};
use dualrun_core::{Bytes, Rational};
use rand::{Rng, SeedableRng};

/// Independent normalizer: string-level CRLF replacement, per-line rstrip,
/// then trailing empty lines dropped.
fn oracle_normalize(b: &[u8]) -> Vec<u8> {
    let s: String = b.iter().map(|&c| c as char).collect();
    let s = s.replace("\r\n", "\n");
    let mut lines: Vec<String> =
        s.split('\n').map(|l| l.trim_end_matches([' ', '\t', '\r', '\x0b', '\x0c']).to_string()).collect();
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    lines.join("\n").chars().map(|c| c as u8).collect()
}

fn oracle_equal(a: &ExecutionOutcome, b: &ExecutionOutcome) -> bool {
    if a.timed_out || b.timed_out {
        return false;
    }
    let keys_a: Vec<&String> = a.produced_files.keys().collect();
    let keys_b: Vec<&String> = b.produced_files.keys().collect();
    a.exit_code == b.exit_code
        && oracle_normalize(&a.stdout) == oracle_normalize(&b.stdout)
        && keys_a == keys_b
        && keys_a.iter().all(|k| oracle_normalize(&a.produced_files[*k]) == oracle_normalize(&b.produced_files[*k]))
}

fn random_text(rng: &mut impl Rng) -> Vec<u8> {
    let alphabet = b"ab \t\r\n";
    (0..rng.gen_range(0..10)).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect()
}

fn random_outcome(rng: &mut impl Rng) -> ExecutionOutcome {
    let mut files = BTreeMap::new();
    for name in ["OUT.DAT", "REPORT.TXT"] {
        if rng.gen_bool(0.3) {
            files.insert(name.to_string(), Bytes(random_text(rng)));
        }
    }
    ExecutionOutcome {
        exit_code: rng.gen_range(0..2),
        stdout: Bytes(random_text(rng)),
        stderr: Bytes(random_text(rng)),
        produced_files: files,
        timed_out: rng.gen_bool(0.05),
    }
}

#[test]
fn comparator_matches_brute_force_oracle() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(500);
    let policy = NormalizationPolicy::default();
    let mut equal_pairs = 0;
    for _ in 0..500 {
        let a = random_outcome(&mut rng);
        let b = if rng.gen_bool(0.3) {
            let mut b = a.clone();
            b.stdout.0.extend_from_slice(b" \r\n\n");
            b
        } else {
            random_outcome(&mut rng)
        };
        let got = outcomes_equal(&a, &b, &policy);
        assert_eq!(got, oracle_equal(&a, &b), "{a:?} vs {b:?}");
        assert_eq!(got, outcomes_equal(&b, &a, &policy));
        equal_pairs += usize::from(got);
    }
    assert!(equal_pairs > 50, "oracle comparison saw too few equal pairs: {equal_pairs}");
}

#[test]
fn identical_outcomes_are_equal() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(3);
    for _ in 0..100 {
        let mut a = random_outcome(&mut rng);
        a.timed_out = false;
        assert!(outcomes_equal(&a, &a.clone(), &NormalizationPolicy::default()));
        assert!(outcomes_equal(&a, &a.clone(), &NormalizationPolicy::bit_exact()));
    }
}

#[test]
fn produced_file_difference_is_detected() {
    let mut a = ExecutionOutcome::default();
    a.produced_files.insert("OUT.DAT".into(), Bytes::from("0001\n"));
    let mut b = a.clone();
    assert!(outcomes_equal(&a, &b, &NormalizationPolicy::default()));
    b.produced_files.insert("OUT.DAT".into(), Bytes::from("0002\n"));
    assert!(!outcomes_equal(&a, &b, &NormalizationPolicy::default()));
    b.produced_files.clear();
    assert!(!outcomes_equal(&a, &b, &NormalizationPolicy::default()));
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[test]
fn accuracy_matches_count_and_divide_oracle() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(1000);
    for _ in 0..1000 {
        let n = rng.gen_range(1..40usize);
        let v: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.6)).collect();
        let count = v.iter().filter(|x| **x).count() as u64;
        let g = gcd(count, n as u64).max(1);
        let expected = format!("{}/{}", count / g, n as u64 / g);
        let got = accuracy_from_matches(&v).unwrap();
        let expected = Rational::parse(&expected).unwrap();
        assert_eq!(got, expected);
        assert!(got.in_unit_interval());
        assert_eq!(got.is_one(), v.iter().all(|x| *x));
        if let Some(i) = v.iter().position(|x| !*x) {
            let mut flipped = v.clone();
            flipped[i] = true;
            let up = accuracy_from_matches(&flipped).unwrap();
            assert_eq!(up - got, Rational::ratio(1, n as u64));
        }
    }
}

#[test]
fn accuracy_over_outcome_pairs() {
    let reference: Vec<ExecutionOutcome> = (0..4)
        .map(|i| ExecutionOutcome { stdout: Bytes::from(format!("{i}\n").as_str()), ..Default::default() })
        .collect();
    let mut generated = reference.clone();
    generated[2].stdout = Bytes::from("wrong\n");
    let ca = computational_accuracy(generated.iter().zip(reference.iter()), &NormalizationPolicy::default()).unwrap();
    assert_eq!(ca, Rational::new(3, 4).unwrap());
    let same = computational_accuracy(reference.iter().zip(reference.iter()), &NormalizationPolicy::default()).unwrap();
    assert!(same.is_one());
    assert!(computational_accuracy(std::iter::empty(), &NormalizationPolicy::default()).is_err());
}
