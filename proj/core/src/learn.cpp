#include "skillseq/learn.hpp"

#include "skillseq/error.hpp"

namespace skillseq {

LearnResult learn_skill(const std::string& name, const StateSpace& space,
                        const std::vector<std::string>& objects,
                        const std::vector<FrameSlot>& slots, std::span<const Demonstration> demos,
                        int K, const LearnOptions& options) {
  if (demos.empty()) throw ValidationError("skill '" + name + "' has no demonstrations");
  EmResult em = em_fit(space.robot, demos, slots, K, options.em);
  HsmmFit fit = fit_hsmm(em.model, demos);

  LearnResult out;
  SkillModel& s = out.model;
  s.name = name;
  s.space = space;
  s.hsmm = std::move(fit.model);
  s.conditions = learn_conditions(s.hsmm, demos, space, objects, options.conditions);
  double total = 0.0;
  for (const auto& d : demos) total += static_cast<double>(d.trajectory.size());
  s.mean_length = total / static_cast<double>(demos.size());
  s.sample_rate = demos.front().sample_rate;
  s.demo_count = static_cast<int>(demos.size());
  s.seed = options.em.seed;
  s.final_log_likelihood = log_likelihood(s.hsmm.gmm, demos);
  s.validate();

  out.log_likelihood = std::move(em.log_likelihood);
  out.iterations = em.iterations;
  out.converged = em.converged;
  out.reseeds = em.reseeds;
  return out;
}

}  // namespace skillseq
