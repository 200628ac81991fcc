// Python bindings. Distributions cross the boundary as plain float lists over
// positional labels; configs and metrics as JSON text (decoded in puma/__init__.py).

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "puma/belief.hpp"
#include "puma/checks.hpp"
#include "puma/config.hpp"
#include "puma/harness.hpp"

namespace py = pybind11;
using puma::Categorical;

namespace {

using Vec = std::vector<double>;

puma::SpacePtr positional(std::size_t n) {
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < n; ++i) labels.push_back(std::to_string(i));
  return puma::LabelSpace::make(std::move(labels));
}

Categorical dist(const Vec& p) { return Categorical(positional(p.size()), p); }
Vec vec(const Categorical& c) { return {c.probs().begin(), c.probs().end()}; }

Categorical on_space(const Vec& p, const Categorical& like) {
  if (p.size() != like.size()) throw puma::Error(puma::ErrorCode::DimensionMismatch, "length mismatch");
  return Categorical(like.space(), p);
}

puma::RunConfig config_from(const std::string& json_text) {
  puma::RunConfig cfg;
  if (!json_text.empty()) cfg.merge_json(nlohmann::json::parse(json_text));
  cfg.validate();
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_puma, m) {
  m.doc() = "PUMA core bindings";

  // Module-lifetime reference; args are (message, error code name).
  static PyObject* puma_error = PyErr_NewException("puma._puma.PumaError", PyExc_RuntimeError, nullptr);
  m.attr("PumaError") = py::handle(puma_error);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const puma::Error& e) {
      PyErr_SetObject(puma_error, py::make_tuple(e.what(), std::string(puma::to_string(e.code()))).ptr());
    } catch (const nlohmann::json::exception& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  m.def("normalize", [](const Vec& w) { return vec(puma::normalize(w, positional(w.size()))); });
  m.def("entropy", [](const Vec& p) { return puma::entropy(dist(p)); });
  m.def("kl_divergence", [](const Vec& q, const Vec& p) {
    const auto qq = dist(q);
    return puma::kl_divergence(qq, on_space(p, qq));
  });
  m.def("bayes_update", [](const Vec& prior, const Vec& lik) {
    return vec(puma::bayes_update(dist(prior), {lik}));
  });
  m.def("log_evidence", [](const Vec& prior, const Vec& lik) { return puma::log_evidence(dist(prior), {lik}); });
  m.def("free_energy", [](const Vec& q, const Vec& prior, const Vec& lik) {
    const auto pp = dist(prior);
    return puma::free_energy(on_space(q, pp), pp, {lik});
  });
  m.def("width_alpha", &puma::width_alpha, py::arg("n_words"), py::arg("hedge") = false);
  m.def("widen", [](const Vec& p_obs, int n_words, bool hedge) {
    const auto w = puma::widen_observation(dist(p_obs), n_words, hedge);
    return py::make_tuple(vec(w.dist), w.alpha);
  }, py::arg("p_obs"), py::arg("n_words"), py::arg("hedge") = false);
  m.def("fuse", [](const Vec& p_obs, const std::optional<Vec>& prior, double beta) {
    const auto o = dist(p_obs);
    std::optional<Categorical> pr;
    if (prior) pr = on_space(*prior, o);
    return vec(puma::fuse(o, pr, beta));
  }, py::arg("p_obs_widened"), py::arg("prior"), py::arg("beta") = 0.35);

  m.def("_default_config", [] { return puma::RunConfig{}.to_json().dump(); });
  m.def("_constants", [] { return puma::constants_json().dump(); });
  m.def("_resolve_config", [](const std::string& j) { return config_from(j).to_json().dump(); });
  m.def("default_data_dir", [] { return puma::default_data_dir(); });

  m.def("_run_checks", [](std::uint64_t seed) {
    std::vector<py::dict> out;
    std::vector<puma::checks::CheckResult> rs;
    {
      py::gil_scoped_release nogil;
      rs = puma::checks::run_all(seed);
    }
    for (const auto& r : rs)
      out.push_back(py::dict(py::arg("name") = r.name, py::arg("pass") = r.pass,
                             py::arg("detail") = r.detail, py::arg("seconds") = r.seconds));
    return out;
  });

  m.def("_run_dynamic",
        [](const std::string& counselor, const std::string& config_json,
           const std::optional<std::filesystem::path>& data_dir,
           const std::optional<std::filesystem::path>& out_dir, int jobs) {
          py::gil_scoped_release nogil;
          const auto cfg = config_from(config_json);
          const puma::DataPaths data{data_dir ? *data_dir : puma::default_data_dir()};
          const auto profiles = puma::load_profiles(data.profiles());
          auto tables = std::make_shared<const puma::SimTables>(
              puma::SimTables::load(data.sim_tables(), cfg.min_support));
          const auto run = puma::run_dynamic(profiles, puma::counselor_kind_from_string(counselor), cfg,
                                             puma::backend_config(cfg, data), tables, out_dir, jobs);
          nlohmann::ordered_json j;
          j["metrics"] = puma::dynamic_metrics(run.transcripts).to_json();
          j["transcripts"] = nlohmann::json::array();
          for (const auto& t : run.transcripts) j["transcripts"].push_back(t.to_jsonl());
          return j.dump();
        },
        py::arg("counselor"), py::arg("config_json"), py::arg("data_dir"), py::arg("out_dir"),
        py::arg("jobs"));

  m.def("_dynamic_metrics", [](const std::vector<std::filesystem::path>& files) {
    std::vector<puma::Transcript> ts;
    for (const auto& f : files) ts.push_back(puma::read_transcript(f));
    return puma::dynamic_metrics(ts).to_json().dump();
  });
}
