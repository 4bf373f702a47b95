use sobolev_lab_ffi::*;
use std::ffi::{CStr, CString};
use std::ptr;

fn last_error() -> String {
    let p = sl_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn density_for_j_one_is_closed_form() {
    let mut d = SlDensity::default();
    assert_eq!(unsafe { sl_density(1, &mut d) }, SlStatus::Ok);
    assert!((d.c - 4.0 * std::f64::consts::PI / 3.0).abs() < 1e-12);
    assert!((d.alpha - 1.5 / std::f64::consts::PI).abs() < 1e-8);
    assert_eq!(unsafe { sl_density(0, &mut d) }, SlStatus::InvalidArgument);
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { sl_density(1, ptr::null_mut()) }, SlStatus::NullPointer);
}

#[test]
fn grid_field_and_deficit_round_trip() {
    unsafe {
        let mut g = ptr::null_mut();
        assert_eq!(sl_grid_new(2, 1.0 / 32.0, &mut g), SlStatus::Ok);
        let name = CString::new("const1").unwrap();
        let mut f = ptr::null_mut();
        assert_eq!(sl_field_builtin(g, name.as_ptr(), &mut f), SlStatus::Ok);
        let mut r = SlSobolevDeficit::default();
        assert_eq!(sl_sobolev_deficit(f, &mut r), SlStatus::Ok);
        assert!(r.deficit.abs() < 1e-9 * r.lhs);
        assert_eq!(r.pass, 1);

        let ones = vec![1.0; sl_grid_active_len(g)];
        let mut f2 = ptr::null_mut();
        assert_eq!(sl_field_from_values(g, ones.as_ptr(), ones.len(), &mut f2), SlStatus::Ok);
        let mut r2 = SlSobolevDeficit::default();
        assert_eq!(sl_sobolev_deficit(f2, &mut r2), SlStatus::Ok);
        assert!((r2.lhs - r.lhs).abs() < 1e-12);
        assert_eq!(
            sl_field_from_values(g, ones.as_ptr(), ones.len() - 1, &mut f2),
            SlStatus::InvalidArgument
        );

        let bad = CString::new("notafunction").unwrap();
        let mut f3 = ptr::null_mut();
        assert_eq!(sl_field_builtin(g, bad.as_ptr(), &mut f3), SlStatus::UnknownName);
        assert!(f3.is_null());
        sl_field_free(f);
        sl_field_free(f2);
        sl_grid_free(g);
        sl_grid_free(ptr::null_mut());
    }
}

#[test]
fn unsupported_dimension_maps_to_code() {
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { sl_grid_new(5, 0.0625, &mut g) }, SlStatus::Unsupported);
    assert!(last_error().contains("dimension"));
}

#[test]
fn catenoid_band_deficit() {
    unsafe {
        let name = CString::new("catenoid").unwrap();
        let mut s = ptr::null_mut();
        assert_eq!(sl_surface_new(name.as_ptr(), f64::NAN, 1.0, &mut s), SlStatus::Ok);
        let field = CString::new("const1").unwrap();
        let mut t = SlSurfaceTerms::default();
        assert_eq!(sl_surface_deficit(s, field.as_ptr(), &mut t), SlStatus::Ok);
        let c = 1f64.cosh();
        let area = 2.0 * std::f64::consts::PI * (1.0 + 1f64.sinh() * c);
        assert!((t.area - area).abs() < 1e-8);
        assert!((t.boundary - 4.0 * std::f64::consts::PI * c).abs() < 1e-8);
        assert!(t.deficit > 0.0);
        sl_surface_free(s);
    }
}

#[test]
fn certificate_json_is_deterministic() {
    unsafe {
        let mut g = ptr::null_mut();
        assert_eq!(sl_grid_new(2, 1.0 / 16.0, &mut g), SlStatus::Ok);
        let name = CString::new("bump1").unwrap();
        let mut f = ptr::null_mut();
        assert_eq!(sl_field_builtin(g, name.as_ptr(), &mut f), SlStatus::Ok);
        let mut a = ptr::null_mut();
        let mut b = ptr::null_mut();
        assert_eq!(sl_certificate_json(f, SlProofPath::Knothe, 7, 1.0, &mut a), SlStatus::Ok);
        assert_eq!(sl_certificate_json(f, SlProofPath::Knothe, 7, 1.0, &mut b), SlStatus::Ok);
        let (ja, jb) = (CStr::from_ptr(a), CStr::from_ptr(b));
        assert_eq!(ja, jb);
        let v: serde_json::Value = serde_json::from_slice(ja.to_bytes()).unwrap();
        assert_eq!(v["pass"], true);
        let mut c = ptr::null_mut();
        assert_eq!(sl_certificate_json(f, SlProofPath::Abp, 7, -1.0, &mut c), SlStatus::InvalidArgument);
        sl_string_free(a);
        sl_string_free(b);
        sl_field_free(f);
        sl_grid_free(g);
    }
}

/// The generated header compiles as C and as C++.
#[test]
fn header_compiles() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = dir.join("include/sobolev_lab.h");
    assert!(header.is_file());
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"sobolev_lab.h\"\nint main(void) { SlDensity d; return sl_density(1, &d) == SL_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    for (cc, lang) in [("cc", "c"), ("c++", "c++")] {
        let Ok(out) = std::process::Command::new(cc)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang, "-I"])
            .arg(dir.join("include"))
            .arg(&src)
            .output()
        else {
            eprintln!("{cc} not available, skipped");
            continue;
        };
        assert!(out.status.success(), "{cc}: {}", String::from_utf8_lossy(&out.stderr));
    }
}
