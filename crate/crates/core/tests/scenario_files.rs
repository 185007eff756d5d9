use std::path::PathBuf;

use epb_abs::sim::{suite, ScenarioSpec};

#[test]
fn shipped_scenarios_match_the_builtin_suite() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    for builtin in suite::all::<f64>() {
        let path = dir.join(format!("{}.toml", builtin.name));
        let loaded = ScenarioSpec::<f64>::from_file(&path, &[]).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(loaded.to_toml().unwrap(), builtin.to_toml().unwrap(), "{}", builtin.name);
    }
}
