#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "emr/eval.hpp"
#include "emr/rl.hpp"

namespace py = pybind11;
using namespace emr;

namespace {

// Reports cross the boundary as JSON text; the Python side decodes them.
std::string dump(const nlohmann::json& j) { return j.dump(); }

std::string render(const StreamItem& item) { return Vocabulary::standard().render(item.tokens); }

}  // namespace

PYBIND11_MODULE(_emr, m) {
  m.doc() = "Episodic memory reader: task generator, training and evaluation.";

  py::enum_<SplitKind>(m, "SplitKind")
      .value("original", SplitKind::original)
      .value("noisy", SplitKind::noisy);

  py::class_<StreamItem>(m, "StreamItem")
      .def_readonly("timestep", &StreamItem::timestep)
      .def_readonly("is_noise", &StreamItem::is_noise)
      .def_readonly("supports", &StreamItem::supports)
      .def_property_readonly("is_question", &StreamItem::is_question)
      .def_property_readonly("text", &render)
      .def_property_readonly("answer", [](const StreamItem& s) {
        return s.is_question() ? Vocabulary::standard().token(s.answer) : std::string();
      })
      .def("__repr__", [](const StreamItem& s) { return std::to_string(s.timestep) + " " + render(s); });

  py::class_<Episode>(m, "Episode")
      .def_readonly("items", &Episode::items)
      .def_property_readonly("noise_count", &Episode::noise_count)
      .def_property_readonly("noise_bucket", &Episode::noise_bucket)
      .def("__len__", [](const Episode& e) { return e.items.size(); });

  m.def("generate_episode", [](std::uint64_t seed, double noise) { return generate_episode(seed, noise); },
        py::arg("seed"), py::arg("noise") = 0.0);
  m.def("generate_split", [](std::uint64_t seed, std::size_t count, SplitKind kind) {
    return generate_split(seed, count, kind);
  }, py::arg("seed"), py::arg("count"), py::arg("kind") = SplitKind::noisy);

  py::class_<Model>(m, "Model")
      .def(py::init([](const std::string& policy, std::size_t memory_slots, std::uint64_t seed) {
             ModelConfig c;
             c.policy = parse_policy(policy);
             c.memory_slots = memory_slots;
             return std::make_unique<Model>(c, seed);
           }),
           py::arg("policy") = "emr_bigru", py::arg("memory_slots") = 5, py::arg("seed") = 1)
      .def_property_readonly("policy", [](const Model& md) { return std::string(to_string(md.config().policy)); })
      .def_property_readonly("memory_slots", [](const Model& md) { return md.config().memory_slots; })
      .def_property_readonly("parameter_count", [](const Model& md) {
        std::size_t n = 0;
        for (const auto& [name, entry] : md.params().entries()) n += entry.node.rows() * entry.node.cols();
        return n;
      });

  m.def("load_model", [](const std::filesystem::path& dir) { return std::move(load_model(dir).model); },
        py::arg("checkpoint"));

  m.def("_evaluate", [](const Model& model, const std::vector<Episode>& episodes, std::size_t slots,
                        std::uint64_t seed) { return dump(evaluate(model, episodes, slots, seed).to_json()); },
        py::arg("model"), py::arg("episodes"), py::arg("memory_slots") = 0, py::arg("seed") = 1);

  m.def("_inspect", [](const Model& model, const Episode& episode, std::size_t slots, std::uint64_t seed) {
    return dump(traces_to_json(inspect_episode(model, episode, slots, seed)));
  }, py::arg("model"), py::arg("episode"), py::arg("memory_slots") = 0, py::arg("seed") = 1);

  m.def("_train", [](const std::string& config_text, const std::string& out_dir) {
    TrainConfig c = parse_train_config(config_text);
    TrainResult r;
    {
      py::gil_scoped_release release;
      r = train(c, generate_split(c.data_seed, c.train_episodes, c.split),
                generate_split(c.eval_seed, c.eval_episodes, c.split), out_dir);
    }
    nlohmann::json curve = nlohmann::json::array();
    for (const auto& p : r.curve) {
      curve.push_back({{"step", p.step}, {"train_accuracy", p.train_accuracy}, {"eval_accuracy", p.eval_accuracy},
                       {"eval_solvable", p.eval_solvable}, {"policy_loss", p.policy_loss},
                       {"value_loss", p.value_loss}, {"entropy", p.entropy}});
    }
    const nlohmann::json summary = {{"updates", r.updates}, {"environment_steps", r.environment_steps},
                                    {"best_step", r.best_step}, {"best_eval_accuracy", r.best_eval_accuracy},
                                    {"best_eval_solvable", r.best_eval_solvable}, {"curve", curve}};
    return py::make_tuple(dump(summary), std::move(r.best_model));
  }, py::arg("config_text"), py::arg("out_dir") = "");
}
