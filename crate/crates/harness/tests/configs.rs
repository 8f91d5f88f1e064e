use std::path::Path;

use cat_core::{ModelConfig, Task};

fn load(name: &str) -> ModelConfig {
    ModelConfig::load(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)).unwrap()
}

#[test]
fn shipped_configs_match_presets() {
    for s in [2, 3, 4] {
        let task = Task::Sr { scale: s };
        assert_eq!(load(&format!("cat-r-x{s}.cfg")), ModelConfig::cat_r(task));
        assert_eq!(load(&format!("cat-a-x{s}.cfg")), ModelConfig::cat_a(task));
    }
    assert_eq!(load("cat-r-car.cfg"), ModelConfig::cat_r(Task::Car));
    assert_eq!(load("tiny-x2.cfg"), ModelConfig::tiny(Task::Sr { scale: 2 }));
    let x4 = load("tiny-x4.cfg");
    assert_eq!((x4.task, x4.blocks), (Task::Sr { scale: 4 }, 2));
}

#[test]
fn display_reparses() {
    for name in ["cat-a-x3.cfg", "cat-r-car.cfg", "tiny-x4.cfg"] {
        let cfg = load(name);
        assert_eq!(ModelConfig::parse(&cfg.to_string()).unwrap(), cfg);
    }
}
