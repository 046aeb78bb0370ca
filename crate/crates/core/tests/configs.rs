use std::path::Path;

use alvtts::config::RunConfig;

#[test]
fn shipped_configs_match_their_presets() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for preset in ["desk", "compact", "full"] {
        let loaded = RunConfig::load(&dir.join(format!("{preset}.toml"))).unwrap();
        let mut expected = RunConfig::preset(preset).unwrap();
        expected.paths.work_dir = dir.join(format!("run-{preset}"));
        assert_eq!(loaded, expected, "{preset}");
    }
}
