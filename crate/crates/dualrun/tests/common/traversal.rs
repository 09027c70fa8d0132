//! Path-traversal request generator and an outside-the-root snapshot.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use walkdir::WalkDir;

use dualrun::sandbox::Sandbox;
use dualrun::tools::invoke;
use dualrun_core::tool::{ToolKind, ToolRequest, ToolStatus};

/// `outer/root` is the sandbox; `outer/outside` is a sibling holding
/// victims; `outer/root/link` points at the sibling.
pub struct Arena {
    pub dir: tempfile::TempDir,
    pub sandbox: Sandbox,
    pub outer: PathBuf,
}

impl Arena {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let outer = dir.path().canonicalize().unwrap();
        let outside = outer.join("outside");
        fs::create_dir_all(outside.join("nested")).unwrap();
        fs::write(outside.join("victim.txt"), "do not touch\n").unwrap();
        fs::write(outside.join("nested/deep.txt"), "deep\n").unwrap();
        let sandbox = Sandbox::new(outer.join("root")).unwrap();
        fs::create_dir_all(sandbox.root().join("sub/inner")).unwrap();
        fs::write(sandbox.root().join("sub/a.txt"), "inside\n").unwrap();
        std::os::unix::fs::symlink(&outside, sandbox.root().join("link")).unwrap();
        Arena { dir, sandbox, outer }
    }

    /// Every path under `outer` except the sandbox root, with file bytes,
    /// plus the names a deep `../` chain could plant above `outer`.
    pub fn snapshot(&self) -> BTreeMap<PathBuf, Option<Vec<u8>>> {
        let root = self.sandbox.root();
        let mut snap: BTreeMap<PathBuf, Option<Vec<u8>>> = WalkDir::new(&self.outer)
            .into_iter()
            .filter_entry(|e| e.path() != root)
            .filter_map(Result::ok)
            .map(|e| {
                let bytes = e.file_type().is_file().then(|| fs::read(e.path()).unwrap());
                (e.path().to_path_buf(), bytes)
            })
            .collect();
        for ancestor in self.outer.ancestors().skip(1) {
            for name in ["planted.py", "outside"] {
                let p = ancestor.join(name);
                snap.insert(p.clone(), Some(p.exists().to_string().into_bytes()));
            }
        }
        snap
    }

    fn escaping_path(&self, rng: &mut ChaCha8Rng) -> String {
        let target = *["outside/victim.txt", "outside/new.txt", "outside/nested/deep.txt", "outside", "planted.py"]
            .choose(rng)
            .unwrap();
        let root = self.sandbox.root().display().to_string();
        let outer = self.outer.display().to_string();
        let depth = rng.gen_range(1..4);
        let up = "../".repeat(depth);
        match rng.gen_range(0..9) {
            0 => format!("../{target}"),
            1 => format!("{up}{}", target),
            2 => format!("sub/../../{target}"),
            3 => format!("./sub/inner/../../../{target}"),
            4 => format!("..\\{}", target.replace('/', "\\")),
            5 => format!("{root}/../{target}"),
            6 => format!("{outer}/{target}"),
            7 => format!("link/{}", target.trim_start_matches("outside/")),
            _ => format!("sub/./..//..{}{target}", "/".repeat(rng.gen_range(1..3))),
        }
    }

    /// One request that names an escaping path somewhere in its arguments.
    pub fn traversal_request(&self, rng: &mut ChaCha8Rng) -> ToolRequest {
        let p = self.escaping_path(rng);
        match rng.gen_range(0..9) {
            0 => ToolRequest::read_file(&p),
            1 => ToolRequest::write_file(&p, "pwned\n"),
            2 => ToolRequest::run_command(&["cat", &p]),
            3 => ToolRequest::run_command(&["ls", "-la", &p]),
            4 => ToolRequest::run_command(&["python3", "-S", &p]),
            5 => ToolRequest::run_command(&["diff", &format!("--to-file={p}"), "sub/a.txt"]),
            6 => ToolRequest::new(ToolKind::RunCommand, json!({ "argv": ["ls"], "cwd": p })),
            7 => ToolRequest::git(&["init", "-q", &p]),
            _ => ToolRequest::git(&["diff", &format!("--output={p}")]),
        }
    }
}

pub struct FuzzOutcome {
    pub requests: usize,
    /// Requests answered with anything but an error status.
    pub accepted: Vec<ToolRequest>,
    /// Paths under the sibling tree that changed, appeared or vanished.
    pub changed: Vec<PathBuf>,
}

/// Runs `n` generated traversal requests against a fresh arena.
pub fn fuzz(n: usize, seed: u64) -> FuzzOutcome {
    let arena = Arena::new();
    let before = arena.snapshot();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut accepted = Vec::new();
    for _ in 0..n {
        let request = arena.traversal_request(&mut rng);
        let result = invoke(&request, &arena.sandbox);
        if result.status == ToolStatus::Ok {
            accepted.push(request);
        }
    }
    let after = arena.snapshot();
    let changed = before
        .keys()
        .chain(after.keys())
        .filter(|k| before.get(*k) != after.get(*k))
        .cloned()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    FuzzOutcome { requests: n, accepted, changed }
}
