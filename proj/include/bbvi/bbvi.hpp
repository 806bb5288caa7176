#ifndef BBVI_BBVI_HPP
#define BBVI_BBVI_HPP

#include <bbvi/conditioner.hpp>
#include <bbvi/errors.hpp>
#include <bbvi/estimators.hpp>
#include <bbvi/family.hpp>
#include <bbvi/harness.hpp>
#include <bbvi/optimizers.hpp>
#include <bbvi/params.hpp>
#include <bbvi/random.hpp>
#include <bbvi/synthetic.hpp>
#include <bbvi/targets.hpp>
#include <bbvi/theory.hpp>

#endif
