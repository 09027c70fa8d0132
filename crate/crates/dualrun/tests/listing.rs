use std::collections::BTreeSet;
use std::fs;

use proptest::prelude::*;

use dualrun::sandbox::Sandbox;
use dualrun::tools::{invoke, list_files};
use dualrun_core::tool::ToolRequest;

fn name() -> impl Strategy<Value = String> {
    "[A-Za-z0-9_.-]{1,6}(/[A-Za-z0-9_-]{1,4}){0,2}"
        .prop_filter("no dot segments", |n| n.split('/').all(|s| s != "." && s != ".." && s != ".git"))
}

/// Byte-wise sort of the created names, deduplicated; the oracle for `**`.
fn oracle(names: &BTreeSet<String>) -> Vec<String> {
    let mut v: Vec<String> = names.iter().cloned().collect();
    v.sort_by(|a, b| a.as_bytes().cmp(b.as_bytes()));
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn listing_is_sorted_and_complete(names in proptest::collection::btree_set(name(), 1..500)) {
        let dir = tempfile::tempdir().unwrap();
        let sandbox = Sandbox::new(dir.path()).unwrap();
        // A name that is also a prefix directory of another cannot be a file.
        let dirs: BTreeSet<String> = names
            .iter()
            .flat_map(|n| n.match_indices('/').map(move |(i, _)| n[..i].to_string()))
            .collect();
        let files: BTreeSet<String> = names.difference(&dirs).cloned().collect();
        for f in &files {
            let path = sandbox.root().join(f);
            fs::create_dir_all(path.parent().unwrap()).unwrap();
            fs::write(path, f).unwrap();
        }
        prop_assert_eq!(list_files(&sandbox, "**").unwrap(), oracle(&files));
        let top: BTreeSet<String> = files.iter().filter(|f| !f.contains('/')).cloned().collect();
        prop_assert_eq!(list_files(&sandbox, "*").unwrap(), oracle(&top));
    }
}

#[test]
fn git_metadata_is_not_listed() {
    let dir = tempfile::tempdir().unwrap();
    let sandbox = Sandbox::new(dir.path()).unwrap();
    fs::write(sandbox.root().join("a.py"), "").unwrap();
    assert!(invoke(&ToolRequest::git(&["init", "-q"]), &sandbox).is_ok());
    assert_eq!(list_files(&sandbox, "**").unwrap(), vec!["a.py"]);
    let r = invoke(&ToolRequest::list_files("**/*.py"), &sandbox);
    assert_eq!(r.stdout.as_slice(), b"a.py\n");
}

#[test]
fn malformed_glob_is_bad_args() {
    let dir = tempfile::tempdir().unwrap();
    let sandbox = Sandbox::new(dir.path()).unwrap();
    assert!(list_files(&sandbox, "[").is_err());
}
