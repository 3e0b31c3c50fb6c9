use std::path::PathBuf;
use std::process::Command;

#[test]
fn c_program_links_against_the_static_library() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header_dir = root.join("include");
    assert!(header_dir.join("rlct.h").exists());
    // target/<profile>/deps/this_test -> target/<profile>
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("librlct_ffi.a");
    if !lib.exists() {
        eprintln!("skipping: {} not built", lib.display());
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let src = dir.join("main.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include <string.h>
#include "rlct.h"
int main(void) {
    double draws[4] = {-4.0, -6.0, -5.0, -5.0};
    RlctChain *chain = NULL;
    if (rlct_chain_new(draws, 4, 0.5, &chain) != RLCT_STATUS_OK) return 1;
    double v = 0.0;
    if (rlct_lambda_v1(chain, &v) != RLCT_STATUS_OK) return 2;
    rlct_chain_free(chain);
    if (v < 0.1249999 || v > 0.1250001) return 3;
    RlctModel *m = NULL;
    if (rlct_model_new("rrr:9", &m) != RLCT_STATUS_CONFIG) return 4;
    if (strlen(rlct_last_error()) == 0) return 5;
    printf("%s\n", rlct_version());
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.join("main");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(&header_dir)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status();
    let Ok(status) = status else {
        eprintln!("skipping: no C compiler");
        return;
    };
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), env!("CARGO_PKG_VERSION"));
}

