use std::fs;
use std::path::Path;

use qnet::networks;
use qnet::NetworkSpec;

fn shipped(name: &str) -> NetworkSpec {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{name}.spec.json"));
    NetworkSpec::from_json(&fs::read_to_string(&path).unwrap()).unwrap()
}

#[test]
fn config_specs_match_builtin_networks() {
    for (name, builtin) in [
        ("tandem", networks::tandem()),
        ("bottleneck", networks::bottleneck(0.5)),
        ("feedback", networks::feedback()),
    ] {
        assert_eq!(shipped(name).to_json(), builtin.to_json(), "{name}");
    }
}
