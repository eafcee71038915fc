//! The generated header must be valid C and C++ and declare the whole API.

use std::path::Path;
use std::process::Command;

const USE_API: &str = r#"
#include "roa.h"
int main(void) {
    RoaProblem *p = NULL;
    RoaResult *r = NULL;
    RoaRecordInfo info;
    RoaValidation val;
    uint32_t w = 6, v = 6;
    double x = 0.0, out = 0.0;
    RoaStatus s = roa_problem_parse("", &p);
    s = roa_problem_load("p.toml", &p);
    s = roa_solve(p, 6, 6, 1, &r);
    s = roa_sweep(p, &w, &v, 1, 0, 0, &r);
    s = roa_result_record(r, 0, &info);
    s = roa_result_eval_w(r, 0, &x, 1, &out);
    s = roa_result_eval_v(r, 0, 0.0, &x, 1, &out);
    s = roa_validate(r, 0, 100, 1, &val);
    s = roa_result_save(r, "r.json");
    char *json = roa_result_to_json(r);
    roa_string_free(json);
    s = roa_result_parse("{}", &r);
    s = roa_result_load("r.json", &r);
    (void)roa_result_len(r);
    (void)roa_result_dim(r);
    (void)roa_problem_dim(p);
    (void)roa_last_error();
    (void)roa_version();
    roa_result_free(r);
    roa_problem_free(p);
    return s == ROA_STATUS_OK && info.status != ROA_SOLVE_STATUS_NOT_SOLVED;
}
"#;

fn compile(compiler: &str, lang: &str) {
    if Command::new(compiler).arg("--version").output().is_err() {
        eprintln!("{compiler} not available; skipping");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let ext = if lang == "c" { "c" } else { "cpp" };
    let src = dir.path().join(format!("use_api.{ext}"));
    std::fs::write(&src, USE_API).unwrap();
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let out = Command::new(compiler)
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang])
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn header_compiles_as_c() {
    compile("cc", "c");
}

#[test]
fn header_compiles_as_cpp() {
    compile("c++", "c++");
}
