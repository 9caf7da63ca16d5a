#pragma once

#include "qcurv/adams.hpp"
#include "qcurv/barycenter.hpp"
#include "qcurv/bubbles.hpp"
#include "qcurv/errors.hpp"
#include "qcurv/factor.hpp"
#include "qcurv/field.hpp"
#include "qcurv/functional.hpp"
#include "qcurv/green.hpp"
#include "qcurv/mesh.hpp"
#include "qcurv/paneitz.hpp"
#include "qcurv/product.hpp"
#include "qcurv/quadrature.hpp"
#include "qcurv/random.hpp"
#include "qcurv/solver.hpp"
#include "qcurv/spherical_harmonics.hpp"
#include "qcurv/transport.hpp"
